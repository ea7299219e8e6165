//! A small synthetic shop-traffic corpus for smoke runs and tests. Normal
//! requests follow a handful of storefront templates; abnormal ones inject
//! SQL-injection or XSS payloads into one parameter.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::corpus::{Label, RawRequestRecord, RequestCorpus};
use super::normalize::normalize_request;
use crate::rng;

const PRODUCTS: &[&str] = &[
    "vino+rioja", "queso+manchego", "jamon+iberico", "aceite+oliva", "turron", "chorizo", "vino+albarino",
    "miel", "azafran", "sidra",
];
const USERS: &[&str] = &["ana", "pedro", "lucia", "jorge", "marta", "sergio", "elena", "pablo", "irene", "diego"];
const PASSWORDS: &[&str] = &["sol2010", "luna77", "casa12", "perro9", "gato31", "mar88", "rio45", "monte3"];
const CITIES: &[&str] = &["madrid", "sevilla", "valencia", "bilbao", "malaga", "zaragoza", "murcia"];
const SURNAMES: &[&str] = &["garcia", "lopez", "martin", "sanchez", "perez", "gomez", "ruiz"];

const SQLI: &[&str] = &[
    "%27+or+%271%27%3D%271",
    "1%27+union+select+password+from+usuarios--",
    "admin%27--",
    "%27%3B+drop+table+usuarios--",
    "1+or+1%3D1",
];
const XSS: &[&str] = &[
    "%3Cscript%3Ealert%281%29%3C%2Fscript%3E",
    "%22%3E%3Cimg+src%3Dx+onerror%3Dalert%28document.cookie%29%3E",
    "%3Csvg+onload%3Dalert%28%27xss%27%29%3E",
    "javascript%3Aalert%28document.domain%29",
];

struct Template {
    method: &'static str,
    path: &'static str,
    in_body: bool,
    fields: &'static [&'static str],
}

const TEMPLATES: &[Template] = &[
    Template { method: "GET", path: "/tienda1/publico/anadir.jsp", in_body: false, fields: &["id", "nombre", "precio", "cantidad", "b1"] },
    Template { method: "POST", path: "/tienda1/publico/autenticar.jsp", in_body: true, fields: &["modo", "login", "pwd", "remember", "b1"] },
    Template { method: "GET", path: "/tienda1/publico/pagar.jsp", in_body: false, fields: &["modo", "precio", "b1"] },
    Template { method: "GET", path: "/tienda1/publico/caracteristicas.jsp", in_body: false, fields: &["id"] },
    Template { method: "POST", path: "/tienda1/publico/registro.jsp", in_body: true, fields: &["modo", "login", "password", "nombre", "apellidos", "ciudad", "cp"] },
    Template { method: "GET", path: "/tienda1/index.jsp", in_body: false, fields: &[] },
];

fn field_value(field: &str, template: usize, rng: &mut rng::Rng) -> String {
    match field {
        "id" => rng.random_range(1..=40).to_string(),
        "nombre" if template == 0 => PRODUCTS.choose(rng).unwrap().to_string(),
        "nombre" => USERS.choose(rng).unwrap().to_string(),
        "precio" => (rng.random_range(1..=60) * 5).to_string(),
        "cantidad" => rng.random_range(1..=99).to_string(),
        "modo" if template == 1 => "entrar".into(),
        "modo" if template == 2 => "insertar".into(),
        "modo" => "registro".into(),
        "login" => USERS.choose(rng).unwrap().to_string(),
        "pwd" | "password" => PASSWORDS.choose(rng).unwrap().to_string(),
        "remember" => "on".into(),
        "b1" if template == 0 => "a%F1adir+al+carrito".into(),
        "b1" if template == 1 => "entrar".into(),
        "b1" => "pasar+por+caja".into(),
        "apellidos" => SURNAMES.choose(rng).unwrap().to_string(),
        "ciudad" => CITIES.choose(rng).unwrap().to_string(),
        "cp" => rng.random_range(10000..=52999).to_string(),
        _ => "x".into(),
    }
}

/// Generates `n` requests. Roughly 60% are normal; the rest split evenly
/// between SQL injection and XSS.
pub fn smoke_corpus(n: usize, seed: u64) -> RequestCorpus {
    let mut rng = rng::seeded(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let attack = match i % 5 {
            0 | 1 | 2 => None,
            3 => Some(("SQLi", SQLI)),
            _ => Some(("XSS", XSS)),
        };
        let t_idx = loop {
            let t = rng.random_range(0..TEMPLATES.len());
            // attacks need a parameter to land in
            if attack.is_none() || !TEMPLATES[t].fields.is_empty() {
                break t;
            }
        };
        let template = &TEMPLATES[t_idx];
        let mut values: Vec<String> = template.fields.iter().map(|f| field_value(f, t_idx, &mut rng)).collect();
        if let Some((_, payloads)) = attack {
            let slot = rng.random_range(0..values.len());
            let payload = payloads.choose(&mut rng).unwrap();
            values[slot] = if rng.random_bool(0.5) { format!("{}{}", values[slot], payload) } else { payload.to_string() };
        }
        let params: Vec<String> = template.fields.iter().zip(&values).map(|(f, v)| format!("{f}={v}")).collect();
        let params = params.join("&");
        let http = if template.in_body {
            format!(
                "{} http://localhost:8080{} HTTP/1.1\nContent-Type: application/x-www-form-urlencoded\n\n{}\n",
                template.method, template.path, params
            )
        } else if params.is_empty() {
            format!("{} http://localhost:8080{} HTTP/1.1\n\n", template.method, template.path)
        } else {
            format!("{} http://localhost:8080{}?{} HTTP/1.1\n\n", template.method, template.path, params)
        };
        let raw = normalize_request(&http).expect("templates produce a request line");
        records.push(RawRequestRecord {
            id: format!("smoke-{i:06}"),
            raw,
            label: if attack.is_some() { Label::Abnormal } else { Label::Normal },
            attack_type: attack.map(|(name, _)| name.to_string()),
            source_dataset: "smoke".into(),
            split: None,
        });
    }
    RequestCorpus::new(records)
}
