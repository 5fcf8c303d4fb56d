use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use subwalk::band::Band;
use subwalk::lattice::Site;

#[derive(Debug, Clone, Serialize)]
pub struct Gate {
    pub claim_id: String,
    pub n: Option<f64>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
    /// Ratio, variation or deviation, compared against `limit`.
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    pub fn band(claim: &str, n: Option<f64>, b: &Band, limit: f64) -> Self {
        let r = b.ratio();
        Self { claim_id: claim.into(), n, band_lo: Some(b.lo), band_hi: Some(b.hi), value: r, limit, pass: r <= limit }
    }

    /// Passes when `value <= limit`.
    pub fn at_most(claim: &str, n: Option<f64>, value: f64, limit: f64) -> Self {
        Self { claim_id: claim.into(), n, band_lo: None, band_hi: None, value, limit, pass: value <= limit }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(claim: &str, n: Option<f64>, value: f64, limit: f64) -> Self {
        Self { claim_id: claim.into(), n, band_lo: None, band_hi: None, value, limit, pass: value >= limit }
    }

    pub fn label(&self) -> String {
        match self.n {
            Some(n) => format!("{} (n={n})", self.claim_id),
            None => self.claim_id.clone(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, value).map_err(std::io::Error::other)
}

/// Header `{prefix}1..{prefix}d` for coordinate columns.
pub fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

pub fn coords(x: &Site, d: usize) -> Vec<String> {
    x[..d].iter().map(|c| c.to_string()).collect()
}

pub fn float(v: f64) -> String {
    format!("{v:.17e}")
}

pub struct Table {
    w: csv::Writer<File>,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> std::io::Result<Self> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(header)?;
        Ok(Self { w })
    }

    pub fn row(&mut self, cells: Vec<String>) -> std::io::Result<()> {
        self.w.write_record(&cells).map_err(std::io::Error::other)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.w.flush()
    }
}
