//! CSV readers and writers for histograms and run diagnostics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use swarmkin_core::estimators::bin_center;
use swarmkin_core::{Histogram1D, Histogram2D, RunDiagnostics};

/// Writes files into one directory and remembers each one, so that a failed
/// command can remove what it already wrote.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        let res = fs::write(&path, contents).with_context(|| format!("writing {}", path.display()));
        // record even on failure so a half-written file is cleaned up
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        res
    }

    pub fn files(&self) -> &[String] {
        &self.written
    }

    pub fn remove_all(&mut self) {
        for name in self.written.drain(..) {
            let _ = fs::remove_file(self.dir.join(name));
        }
    }
}

pub fn hist1d_csv(h: &Histogram1D) -> Result<String> {
    let d = h
        .density()
        .ok_or_else(|| anyhow!("histogram not finalized"))?;
    let n = h.n_bins();
    let mut s = format!("# n_bins={n} total={}\nbin_center,density\n", h.total());
    for (b, v) in d.iter().enumerate() {
        writeln!(s, "{},{}", bin_center(b, n), v).unwrap();
    }
    Ok(s)
}

/// Row `i` is the first-angle bin `i`, column `j` the second.
pub fn hist2d_csv(h: &Histogram2D) -> Result<String> {
    let d = h
        .density()
        .ok_or_else(|| anyhow!("histogram not finalized"))?;
    let n = h.n_bins();
    let mut s = format!("# n_bins={n} total={} rows=theta1 cols=theta2\n", h.total());
    for row in d.chunks(n) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn runs_csv(runs: &[RunDiagnostics]) -> String {
    let mut s = String::from("run,iterations,stop_reason,order_parameter,accepted\n");
    for (i, r) in runs.iter().enumerate() {
        writeln!(
            s,
            "{i},{},{},{},{}",
            r.iterations,
            r.stop_reason.name(),
            r.final_order_parameter,
            r.accepted
        )
        .unwrap();
    }
    s
}

/// Histogram read back from its CSV form.
#[derive(Debug, Clone)]
pub enum LoadedHistogram {
    One(Histogram1D),
    Two(Histogram2D),
}

fn header_field(line: &str, key: &str) -> Result<u64> {
    line.split_whitespace()
        .find_map(|t| t.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .ok_or_else(|| anyhow!("header lacks `{key}`"))?
        .parse()
        .with_context(|| format!("header field `{key}`"))
}

/// Reconstructs counts as `density · total · measure`, rounded.
pub fn parse_histogram(text: &str) -> Result<LoadedHistogram> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| anyhow!("empty histogram file"))?;
    if !header.starts_with('#') {
        bail!("histogram file must start with a `#` header line");
    }
    let n = header_field(header, "n_bins")? as usize;
    let total = header_field(header, "total")? as f64;
    if n == 0 {
        bail!("n_bins = 0");
    }
    let to_count = |d: f64, measure: f64| -> Result<u64> {
        let c = (d * total * measure).round();
        if !(c.is_finite() && c >= 0.0) {
            bail!("density {d} does not give a count");
        }
        Ok(c as u64)
    };
    if header.contains("rows=") {
        let mut counts = Vec::with_capacity(n * n);
        let measure = 1.0 / (n * n) as f64;
        for l in lines {
            for v in l.split(',') {
                counts.push(to_count(
                    v.trim().parse().with_context(|| format!("value `{v}`"))?,
                    measure,
                )?);
            }
        }
        let mut h = Histogram2D::from_counts(n, counts).map_err(|e| anyhow!("{e}"))?;
        if h.total() > 0 {
            h.finalize().map_err(|e| anyhow!("{e}"))?;
        }
        Ok(LoadedHistogram::Two(h))
    } else {
        if lines.next().map(str::trim) != Some("bin_center,density") {
            bail!("missing `bin_center,density` column line");
        }
        let measure = 1.0 / n as f64;
        let mut counts = Vec::with_capacity(n);
        for l in lines {
            let (_, d) = l
                .split_once(',')
                .ok_or_else(|| anyhow!("malformed row `{l}`"))?;
            counts.push(to_count(
                d.trim().parse().with_context(|| format!("value `{d}`"))?,
                measure,
            )?);
        }
        if counts.len() != n {
            bail!("{} rows for {n} bins", counts.len());
        }
        let mut h = Histogram1D::from_counts(counts).map_err(|e| anyhow!("{e}"))?;
        if h.total() > 0 {
            h.finalize().map_err(|e| anyhow!("{e}"))?;
        }
        Ok(LoadedHistogram::One(h))
    }
}

pub fn read_histogram(path: &Path) -> Result<LoadedHistogram> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_histogram(&text).with_context(|| format!("parsing {}", path.display()))
}
