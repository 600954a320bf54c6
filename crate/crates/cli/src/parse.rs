//! Parsers for command-line values.

use num_complex::Complex64;

/// Parses `a`, `bi`, `a+bi` or `a-bi` (also with `j`), allowing exponents.
pub fn complex(text: &str) -> Result<Complex64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("cannot parse complex number {text:?}; expected a+bi");
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix('i').or_else(|| s.strip_suffix('j')) else {
        return s.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let imag = |t: &str| -> Result<f64, String> {
        match t {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => t.parse::<f64>().map_err(|_| bad()),
        }
    };
    match split {
        Some(k) => {
            let re = body[..k].parse::<f64>().map_err(|_| bad())?;
            Ok(Complex64::new(re, imag(&body[k..])?))
        }
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

/// Comma-separated reals.
pub fn reals(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("cannot parse {t:?} as a number")))
        .collect()
}

/// `re0,re1,im0,im1`.
pub fn region(text: &str) -> Result<[f64; 4], String> {
    let v = reals(text)?;
    v.try_into().map_err(|_| format!("expected four numbers re0,re1,im0,im1, got {text:?}"))
}
