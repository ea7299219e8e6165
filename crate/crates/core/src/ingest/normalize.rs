//! Canonicalization of raw HTTP requests into single-line lowercase text.

use crate::error::{Error, Result};

const METHODS: &[&str] = &["GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS", "TRACE", "CONNECT"];

/// Which header fields survive normalization. Names are matched
/// case-insensitively.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub headers: Vec<String>,
    pub header_prefixes: Vec<String>,
}

impl NormalizeOptions {
    /// Headers kept for API traffic, where cookie and log4j payloads travel in
    /// header values.
    pub fn api_traffic() -> Self {
        Self {
            headers: vec!["cookie".into(), "user-agent".into(), "referer".into()],
            header_prefixes: vec!["x-".into()],
        }
    }

    fn keeps(&self, name: &str) -> bool {
        let name = name.to_ascii_lowercase();
        self.headers.iter().any(|h| h.eq_ignore_ascii_case(&name))
            || self.header_prefixes.iter().any(|p| name.starts_with(&p.to_ascii_lowercase()))
    }
}

/// Normalizes a request keeping method, path, query string and body.
pub fn normalize_request(raw_http: &str) -> Result<String> {
    normalize_request_with(raw_http, &NormalizeOptions::default())
}

pub fn normalize_request_with(raw_http: &str, options: &NormalizeOptions) -> Result<String> {
    let mut lines = raw_http.split('\n').map(|l| l.trim_end_matches('\r'));
    let request_line = lines.by_ref().find(|l| !l.trim().is_empty()).ok_or(Error::EmptyRequest)?;

    let mut parts = request_line.split_whitespace();
    let method = parts.next().ok_or(Error::EmptyRequest)?;
    let target = parts.next().unwrap_or("");

    let mut headers = Vec::new();
    for line in lines.by_ref() {
        if line.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if options.keeps(name.trim()) {
                headers.push(format!("{}: {}", name.trim(), percent_decode(value.trim(), false)));
            }
        }
    }
    let body: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    let body = body.join(" ");

    let (path, query) = split_target(target);
    let mut out = vec![method.to_string()];
    if !path.is_empty() {
        out.push(percent_decode(path, false));
    }
    if !query.is_empty() {
        out.push(percent_decode(query, true));
    }
    out.extend(headers);
    if !body.is_empty() {
        out.push(percent_decode(&body, true));
    }
    Ok(squash(&out.join(" ").to_lowercase()))
}

/// Splits a request target into (path, query), dropping any scheme,
/// authority and fragment.
fn split_target(target: &str) -> (&str, &str) {
    let mut rest = target;
    if let Some(idx) = rest.find("://") {
        let after = &rest[idx + 3..];
        rest = match after.find('/') {
            Some(slash) => &after[slash..],
            None => match after.find('?') {
                Some(q) => &after[q..],
                None => "/",
            },
        };
    }
    let rest = rest.split('#').next().unwrap_or("");
    match rest.split_once('?') {
        Some((p, q)) => (p, q),
        None => (rest, ""),
    }
}

/// Decodes `%XX` escapes once. With `plus_as_space`, a literal `+` becomes a
/// space before decoding, so `%2B` still yields `+`. Malformed escapes are
/// kept verbatim. Bytes that do not form UTF-8 are read as Latin-1.
pub fn percent_decode(input: &str, plus_as_space: bool) -> String {
    let bytes = input.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'%' if i + 2 < bytes.len() => {
                match (hex_val(bytes[i + 1]), hex_val(bytes[i + 2])) {
                    (Some(h), Some(l)) => {
                        out.push(h << 4 | l);
                        i += 3;
                    }
                    _ => {
                        out.push(b'%');
                        i += 1;
                    }
                }
            }
            b'+' if plus_as_space => {
                out.push(b' ');
                i += 1;
            }
            b => {
                out.push(b);
                i += 1;
            }
        }
    }
    match String::from_utf8(out) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    }
}

fn hex_val(b: u8) -> Option<u8> {
    (b as char).to_digit(16).map(|d| d as u8)
}

/// Drops CR/LF and collapses whitespace runs to one space.
fn squash(s: &str) -> String {
    s.chars()
        .filter(|&c| c != '\r' && c != '\n')
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// True for lines of the form `METHOD target [HTTP/x.y]`.
pub fn is_request_line(line: &str) -> bool {
    let mut parts = line.split_whitespace();
    let (Some(method), Some(_target)) = (parts.next(), parts.next()) else {
        return false;
    };
    if !METHODS.iter().any(|m| m.eq_ignore_ascii_case(method)) {
        return false;
    }
    match (parts.next(), parts.next()) {
        (None, _) => true,
        (Some(version), None) => version.to_ascii_uppercase().starts_with("HTTP/"),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_line_with_query() {
        assert_eq!(
            normalize_request("GET /pagar.jsp?modo=insertar HTTP/1.1").unwrap(),
            "get /pagar.jsp modo=insertar"
        );
    }

    #[test]
    fn already_normal() {
        assert_eq!(normalize_request("get /a").unwrap(), "get /a");
    }

    #[test]
    fn single_percent_decode() {
        assert_eq!(normalize_request("GET /x?q=a%27").unwrap(), "get /x q=a'");
        // %2527 decodes once to %27 and stays there
        assert_eq!(normalize_request("GET /x?q=a%2527").unwrap(), "get /x q=a%27");
    }

    #[test]
    fn plus_and_encoded_plus() {
        assert_eq!(normalize_request("GET /s?q=a+b%2Bc").unwrap(), "get /s q=a b+c");
    }

    #[test]
    fn empty_request() {
        assert!(matches!(normalize_request(""), Err(Error::EmptyRequest)));
        assert!(matches!(normalize_request("\r\n\r\n"), Err(Error::EmptyRequest)));
    }

    #[test]
    fn absolute_url_headers_and_body() {
        let raw = "POST http://localhost:8080/tienda1/publico/anadir.jsp HTTP/1.1\r\n\
                   User-Agent: Mozilla/5.0\r\n\
                   Cookie: JSESSIONID=ABC\r\n\
                   \r\n\
                   id=3&nombre=Vino+Rioja&B1=A%F1adir\r\n";
        assert_eq!(
            normalize_request(raw).unwrap(),
            "post /tienda1/publico/anadir.jsp id=3&nombre=vino rioja&b1=añadir"
        );
        assert_eq!(
            normalize_request_with(raw, &NormalizeOptions::api_traffic()).unwrap(),
            "post /tienda1/publico/anadir.jsp user-agent: mozilla/5.0 cookie: jsessionid=abc id=3&nombre=vino rioja&b1=añadir"
        );
    }

    #[test]
    fn encoded_crlf_is_removed() {
        assert_eq!(normalize_request("GET /a?x=1%0d%0aSet-Cookie").unwrap(), "get /a x=1set-cookie");
    }

    #[test]
    fn malformed_escape_kept() {
        assert_eq!(percent_decode("100%", false), "100%");
        assert_eq!(percent_decode("%zz%4", false), "%zz%4");
    }

    #[test]
    fn request_line_detection() {
        assert!(is_request_line("GET http://localhost:8080/tienda1/index.jsp HTTP/1.1"));
        assert!(is_request_line("post /a"));
        assert!(!is_request_line("User-Agent: x"));
        assert!(!is_request_line("id=3&x=4"));
    }
}
