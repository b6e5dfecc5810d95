use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use residual_racing::Error;

/// Histogram of slip angles with bins `[k w, (k + 1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipHistogram {
    pub bin_width: f64,
    /// Bin index `k` to count.
    pub counts: BTreeMap<i64, u64>,
    pub min: f64,
    pub max: f64,
}

impl SlipHistogram {
    pub fn new(bin_width: f64) -> Self {
        assert!(bin_width > 0.0, "bin width must be positive");
        Self {
            bin_width,
            counts: BTreeMap::new(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>, bin_width: f64) -> Self {
        let mut h = Self::new(bin_width);
        for v in values {
            h.add(v);
        }
        h
    }

    pub fn add(&mut self, beta: f64) {
        let k = (beta / self.bin_width).floor() as i64;
        *self.counts.entry(k).or_insert(0) += 1;
        self.min = self.min.min(beta);
        self.max = self.max.max(beta);
    }

    pub fn merge(&mut self, other: &SlipHistogram) {
        assert_eq!(self.bin_width, other.bin_width, "bin widths differ");
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `(bin start, bin end, count)` for every bin between the extremes, empty ones included.
    pub fn bins(&self) -> Vec<(f64, f64, u64)> {
        let (Some(&lo), Some(&hi)) = (self.counts.keys().next(), self.counts.keys().next_back()) else {
            return Vec::new();
        };
        (lo..=hi)
            .map(|k| {
                let c = self.counts.get(&k).copied().unwrap_or(0);
                (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width, c)
            })
            .collect()
    }

    /// Comment lines with the extremes, then `bin_start,bin_end,count` rows.
    pub fn write(&self, path: &Path) -> Result<(), Error> {
        let mut out = Vec::new();
        writeln!(out, "# bin_width={}", self.bin_width).expect("in-memory write");
        writeln!(out, "# beta_min={}", self.min).expect("in-memory write");
        writeln!(out, "# beta_max={}", self.max).expect("in-memory write");
        writeln!(out, "# total={}", self.total()).expect("in-memory write");
        writeln!(out, "bin_start,bin_end,count").expect("in-memory write");
        for (a, b, c) in self.bins() {
            writeln!(out, "{a},{b},{c}").expect("in-memory write");
        }
        std::fs::write(path, out).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}
