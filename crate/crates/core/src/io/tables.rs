//! Export of filter banks and connection coefficients.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::operator::connection::ConnectionCache;
use crate::wavelet::{make_family, WaveletFamily, MAX_ORDER};

/// Largest derivative order exported.
pub const MAX_TABLE_DERIVATIVE: usize = 2;

/// `order,k,h` rows of the low-pass filter.
pub fn filter_csv(f: &WaveletFamily) -> String {
    let mut out = String::from("order,k,h\n");
    for (k, h) in f.filter().iter().enumerate() {
        let _ = writeln!(out, "{},{k},{h:.16e}", f.order());
    }
    out
}

/// Writes `filter_p{p}.csv` and `connection_p{p}_d{d}.csv` for every order
/// and every derivative the order can represent. Returns the written paths.
pub fn export_tables(dir: &Path, orders: impl IntoIterator<Item = usize>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cache = ConnectionCache::new(dir);
    let mut written = Vec::new();
    for p in orders {
        if !(1..=MAX_ORDER).contains(&p) {
            return Err(Error::UnsupportedOrder(p));
        }
        let family = make_family(p)?;
        let path = dir.join(format!("filter_p{p}.csv"));
        std::fs::write(&path, filter_csv(&family)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        for d in 0..=MAX_TABLE_DERIVATIVE {
            match cache.get(p, d) {
                Ok(_) => written.push(cache.path_for(p, d)),
                Err(Error::Regularity { .. }) => break,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(written)
}
