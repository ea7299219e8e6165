//! Exact earth mover's distance between two discrete distributions,
//! solved as a min-cost flow with successive shortest paths.

use crate::error::{Error, Result};

const EPS: f64 = 1e-12;

fn check_weights(w: &[f64], side: &str) -> Result<()> {
    if w.is_empty() {
        return Err(Error::WeightMismatch(format!("{side} weights are empty")));
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::WeightMismatch(format!("{side} weights must be non-negative")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::WeightMismatch(format!("{side} weights sum to {s}")));
    }
    Ok(())
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Minimal total cost of moving `supply` onto `demand`, where moving one
/// unit from `i` to `j` costs `cost[i][j]`.
pub fn emd(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<f64> {
    check_weights(supply, "supply")?;
    check_weights(demand, "demand")?;
    let (n, m) = (supply.len(), demand.len());
    if cost.len() != n {
        return Err(Error::DimensionMismatch(n, cost.len()));
    }
    for row in cost {
        if row.len() != m {
            return Err(Error::DimensionMismatch(m, row.len()));
        }
        if row.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::NegativeCost);
        }
    }

    // nodes: source, supplies, demands, sink
    let (src, sink) = (0, n + m + 1);
    let nodes = n + m + 2;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, a: usize, b: usize, cap: f64, cost: f64| {
        adj[a].push(edges.len());
        edges.push(Edge { to: b, cap, cost });
        adj[b].push(edges.len());
        edges.push(Edge { to: a, cap: 0.0, cost: -cost });
    };
    for (i, &s) in supply.iter().enumerate() {
        add(&mut edges, src, 1 + i, s, 0.0);
    }
    for (j, &d) in demand.iter().enumerate() {
        add(&mut edges, 1 + n + j, sink, d, 0.0);
    }
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            add(&mut edges, 1 + i, 1 + n + j, f64::INFINITY, c);
        }
    }

    let mut remaining: f64 = supply.iter().sum::<f64>().min(demand.iter().sum());
    let mut total = 0.0;
    while remaining > EPS {
        // Bellman-Ford; residual graphs of this problem have no negative cycles
        let mut dist = vec![f64::INFINITY; nodes];
        let mut prev: Vec<Option<usize>> = vec![None; nodes];
        dist[src] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    let edge = &edges[e];
                    if edge.cap > EPS && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        prev[edge.to] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut push = remaining;
        let mut v = sink;
        while let Some(e) = prev[v] {
            push = push.min(edges[e].cap);
            v = edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = prev[v] {
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            v = edges[e ^ 1].to;
        }
        total += push * dist[sink];
        remaining -= push;
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Minimum over the basic feasible solutions of the transportation
    /// polytope: every spanning-tree basis of `n + m - 1` cells.
    fn brute_force(a: &[f64], b: &[f64], c: &[Vec<f64>]) -> f64 {
        let (n, m) = (a.len(), b.len());
        let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
        let k = n + m - 1;
        let mut best = f64::INFINITY;
        let mut pick = vec![0usize; k];
        fn next(pick: &mut [usize], total: usize) -> bool {
            let k = pick.len();
            for i in (0..k).rev() {
                if pick[i] < total - k + i {
                    pick[i] += 1;
                    for j in i + 1..k {
                        pick[j] = pick[j - 1] + 1;
                    }
                    return true;
                }
            }
            false
        }
        for (i, p) in pick.iter_mut().enumerate() {
            *p = i;
        }
        loop {
            let basis: Vec<(usize, usize)> = pick.iter().map(|&p| cells[p]).collect();
            let (mut row, mut col) = (a.to_vec(), b.to_vec());
            let mut x = vec![None; basis.len()];
            let mut ok = true;
            for _ in 0..basis.len() {
                // peel a row or column with a single unsolved basic cell
                let leaf = (0..basis.len()).find(|&e| {
                    x[e].is_none() && {
                        let (i, j) = basis[e];
                        let in_row = (0..basis.len()).filter(|&f| x[f].is_none() && basis[f].0 == i).count();
                        let in_col = (0..basis.len()).filter(|&f| x[f].is_none() && basis[f].1 == j).count();
                        in_row == 1 || in_col == 1
                    }
                });
                let Some(e) = leaf else {
                    ok = false;
                    break;
                };
                let (i, j) = basis[e];
                let in_row = (0..basis.len()).filter(|&f| x[f].is_none() && basis[f].0 == i).count();
                let v = if in_row == 1 { row[i] } else { col[j] };
                x[e] = Some(v);
                row[i] -= v;
                col[j] -= v;
            }
            if ok
                && x.iter().all(|v| v.unwrap() >= -1e-12)
                && row.iter().chain(&col).all(|r| r.abs() < 1e-9)
            {
                let cost: f64 = basis.iter().zip(&x).map(|(&(i, j), v)| c[i][j] * v.unwrap()).sum();
                best = best.min(cost);
            }
            if !next(&mut pick, cells.len()) {
                break;
            }
        }
        best
    }

    fn dist(r: &mut impl Rng, n: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.01).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    fn metric(points: &[f64]) -> Vec<Vec<f64>> {
        points.iter().map(|p| points.iter().map(|q| (p - q).abs()).collect()).collect()
    }

    #[test]
    fn examples() {
        let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(emd(&[0.5, 0.5], &[0.5, 0.5], &c).unwrap(), 0.0);
        assert!((emd(&[1.0], &[1.0], &[vec![0.37]]).unwrap() - 0.37).abs() < 1e-15);
        assert!((emd(&[1.0, 0.0], &[0.0, 1.0], &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(emd(&[0.5], &[1.0], &[vec![1.0]]), Err(Error::WeightMismatch(_))));
        assert!(matches!(emd(&[1.0], &[1.0], &[vec![-1.0]]), Err(Error::NegativeCost)));
    }

    #[test]
    fn matches_basis_enumeration() {
        let mut r = crate::rng::seeded(42);
        for _ in 0..200 {
            let (n, m) = (r.random_range(1..=4), r.random_range(1..=4));
            let (a, b) = (dist(&mut r, n), dist(&mut r, m));
            let c: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.random::<f64>()).collect()).collect();
            let fast = emd(&a, &b, &c).unwrap();
            let slow = brute_force(&a, &b, &c);
            assert!((fast - slow).abs() < 1e-9, "{fast} vs {slow}");
        }
    }

    proptest! {
        #[test]
        fn triangle_inequality(seed in 0u64..10_000) {
            let mut r = crate::rng::seeded(seed);
            let n = r.random_range(1..=4);
            let points: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
            let c = metric(&points);
            let (a, b, d) = (dist(&mut r, n), dist(&mut r, n), dist(&mut r, n));
            let ac = emd(&a, &d, &c).unwrap();
            let ab = emd(&a, &b, &c).unwrap();
            let bc = emd(&b, &d, &c).unwrap();
            prop_assert!((ac - brute_force(&a, &d, &c)).abs() < 1e-9);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
