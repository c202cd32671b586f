//! Connection coefficients `Γ^d_l = ∫ φ^{(d)}(x) φ(x − l) dx`.
//!
//! Substituting the refinement equation on both factors gives the
//! eigen-relation `Γ = 2^d A Γ` with `A[l][n] = a_{n−2l}`, `a` the filter
//! autocorrelation. The solution is fixed by the moment condition
//! `Σ_l l^d Γ_l = (−1)^d d!`, which follows from exact reproduction of
//! `x^d` by the integer translates of φ.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{null_vector, Dense};
use crate::wavelet::{make_family, WaveletFamily};

/// Highest derivative order for which tables are built.
pub const MAX_DERIVATIVE: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionTable {
    order: usize,
    derivative: usize,
    /// `values[l + reach]` holds `Γ_l` for `−reach ≤ l ≤ reach`.
    values: Vec<f64>,
}

impl ConnectionTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn derivative(&self) -> usize {
        self.derivative
    }

    /// Largest `|l|` with possibly nonzero `Γ_l`, `2p − 2`.
    pub fn reach(&self) -> i64 {
        (self.values.len() as i64 - 1) / 2
    }

    pub fn get(&self, l: i64) -> f64 {
        let r = self.reach();
        if l.abs() > r {
            0.0
        } else {
            self.values[(l + r) as usize]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterator over `(l, Γ_l)`.
    pub fn entries(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let r = self.reach();
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (i as i64 - r, *v))
    }
}

fn check_derivative(order: usize, d: usize) -> Result<()> {
    if d > MAX_DERIVATIVE {
        return Err(Error::Unsupported(format!(
            "derivative order {d} (at most {MAX_DERIVATIVE} is supported)"
        )));
    }
    if d > 0 && d >= order {
        return Err(Error::Regularity {
            order,
            derivative: d,
        });
    }
    Ok(())
}

/// Computes `Γ^d` for `family`.
pub fn connection_coefficients(family: &WaveletFamily, d: usize) -> Result<ConnectionTable> {
    let p = family.order();
    check_derivative(p, d)?;
    let reach = 2 * p as i64 - 2;
    let size = (2 * reach + 1) as usize;
    if d == 0 {
        let mut values = vec![0.0; size];
        values[reach as usize] = 1.0;
        return Ok(ConnectionTable {
            order: p,
            derivative: 0,
            values,
        });
    }
    let scale = (d as f64).exp2();
    let mut a = Dense::zeros(size, size);
    for i in 0..size {
        let l = i as i64 - reach;
        for j in 0..size {
            let n = j as i64 - reach;
            a.set(i, j, scale * family.autocorrelation(n - 2 * l));
        }
        a.add(i, i, -1.0);
    }
    let moment: Vec<f64> = (0..size)
        .map(|j| ((j as i64 - reach) as f64).powi(d as i32))
        .collect();
    let factorial: f64 = (1..=d).map(|k| k as f64).product();
    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
    let mut values = null_vector(&a, &moment, sign * factorial)?;
    // Enforce the exact parity Γ_{−l} = (−1)^d Γ_l.
    for i in 0..=reach as usize {
        let j = size - 1 - i;
        let avg = 0.5 * (values[j] + sign * values[i]);
        values[j] = avg;
        values[i] = sign * avg;
    }
    if d % 2 == 1 {
        values[reach as usize] = 0.0;
    }
    Ok(ConnectionTable {
        order: p,
        derivative: d,
        values,
    })
}

/// CSV text of a table: header, checksum comment, one row per offset.
fn table_csv_body(table: &ConnectionTable) -> String {
    let mut body = String::from("p,d,l,gamma\n");
    for (l, g) in table.entries() {
        let _ = writeln!(
            body,
            "{},{},{},{:.16e}",
            table.order, table.derivative, l, g
        );
    }
    body
}

fn checksum(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes a table as the cache file format.
pub fn table_to_csv(table: &ConnectionTable) -> String {
    let body = table_csv_body(table);
    format!("# sha256={}\n{}", checksum(&body), body)
}

/// Parses a cache file; `None` when the checksum or format does not match.
pub fn table_from_csv(text: &str, order: usize, d: usize) -> Option<ConnectionTable> {
    let (first, body) = text.split_once('\n')?;
    let expected = first.strip_prefix("# sha256=")?.trim();
    if checksum(body) != expected {
        return None;
    }
    let mut lines = body.lines();
    if lines.next()? != "p,d,l,gamma" {
        return None;
    }
    let mut values = Vec::new();
    for line in lines {
        let mut parts = line.split(',');
        let p: usize = parts.next()?.parse().ok()?;
        let dd: usize = parts.next()?.parse().ok()?;
        let _l: i64 = parts.next()?.parse().ok()?;
        let g: f64 = parts.next()?.parse().ok()?;
        if p != order || dd != d {
            return None;
        }
        values.push(g);
    }
    if values.len() != 4 * order - 3 {
        return None;
    }
    Some(ConnectionTable {
        order,
        derivative: d,
        values,
    })
}

/// On-disk cache of connection tables, one file per `(p, d)`.
#[derive(Debug, Clone)]
pub struct ConnectionCache {
    dir: PathBuf,
}

impl ConnectionCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ConnectionCache { dir: dir.into() }
    }

    pub fn path_for(&self, order: usize, d: usize) -> PathBuf {
        self.dir.join(format!("connection_p{order}_d{d}.csv"))
    }

    /// Loads a verified table, or recomputes and rewrites it.
    pub fn get(&self, order: usize, d: usize) -> Result<ConnectionTable> {
        let path = self.path_for(order, d);
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Some(table) = table_from_csv(&text, order, d) {
                return Ok(table);
            }
        }
        let family = make_family(order)?;
        let table = connection_coefficients(&family, d)?;
        write_atomic(&path, &table_to_csv(&table))?;
        Ok(table)
    }
}

pub(crate) fn write_atomic(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d0_is_delta() {
        for p in 1..=4 {
            let t = connection_coefficients(&make_family(p).unwrap(), 0).unwrap();
            for (l, g) in t.entries() {
                assert_eq!(g, if l == 0 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn d4_first_derivative_known_values() {
        let t = connection_coefficients(&make_family(2).unwrap(), 1).unwrap();
        let expected = [
            (-2, -1.0 / 12.0),
            (-1, 2.0 / 3.0),
            (0, 0.0),
            (1, -2.0 / 3.0),
            (2, 1.0 / 12.0),
        ];
        for (l, v) in expected {
            assert!((t.get(l) - v).abs() < 1e-12, "l={l} {}", t.get(l));
        }
    }

    #[test]
    fn regularity_guard() {
        let f = make_family(2).unwrap();
        assert!(matches!(
            connection_coefficients(&f, 2),
            Err(Error::Regularity {
                order: 2,
                derivative: 2
            })
        ));
        let haar = make_family(1).unwrap();
        assert!(connection_coefficients(&haar, 1).is_err());
    }

    #[test]
    fn second_derivative_moments() {
        let t = connection_coefficients(&make_family(3).unwrap(), 2).unwrap();
        let s0: f64 = t.entries().map(|(_, g)| g).sum();
        let s2: f64 = t.entries().map(|(l, g)| (l * l) as f64 * g).sum();
        assert!(s0.abs() < 1e-10);
        assert!((s2 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn cache_round_trip_and_tamper_detection() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ConnectionCache::new(dir.path());
        let a = cache.get(3, 1).unwrap();
        let b = cache.get(3, 1).unwrap();
        assert_eq!(a, b);
        let path = cache.path_for(3, 1);
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("3,1,0,", "3,1,0,1", 1);
        std::fs::write(&path, tampered).unwrap();
        assert!(table_from_csv(&std::fs::read_to_string(&path).unwrap(), 3, 1).is_none());
        let c = cache.get(3, 1).unwrap();
        assert_eq!(a, c);
    }
}
