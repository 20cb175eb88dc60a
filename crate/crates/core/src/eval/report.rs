use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::EvalSummary;
use crate::error::{Error, Result};
use crate::io::{read_file, write_atomic};
use crate::trainer::EpochReport;

pub const CURVE_HEADER: &str = "epoch,train_mse,train_nll,dev_nll,dev_fer,lr,seconds";
pub const SE_CURVE_HEADER: &str = "epoch,train_mse,dev_mse,lr,seconds";
pub const SUMMARY_HEADER: &str = "num_frames,fer,nll,mse";

// f64 Display is the shortest string that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(path: &Path, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, format!("bad number {field:?}")))
}

fn text(path: &Path) -> Result<String> {
    String::from_utf8(read_file(path)?).map_err(|_| Error::format(path, "not UTF-8"))
}

fn data_rows<'a>(path: &Path, body: &'a str, header: &str) -> Result<Vec<Vec<&'a str>>> {
    let mut lines = body.lines();
    if lines.next() != Some(header) {
        return Err(Error::format(path, format!("expected header {header:?}")));
    }
    let width = header.split(',').count();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() == width {
                Ok(f)
            } else {
                Err(Error::format(path, format!("expected {width} fields in {l:?}")))
            }
        })
        .collect()
}

/// Per-epoch classification curves, one row per report.
pub fn emit_curves(reports: &[EpochReport], path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("no epoch reports to write"));
    }
    let mut out = format!("{CURVE_HEADER}\n");
    for r in reports {
        let cols = [r.train_mse, r.train_nll, r.dev_nll, r.dev_fer, r.lr, r.seconds].map(num);
        writeln!(out, "{},{}", r.epoch, cols.join(",")).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

/// Per-epoch curves of an enhancement-only stage.
pub fn emit_se_curves(reports: &[EpochReport], path: &Path) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::invalid("no epoch reports to write"));
    }
    let mut out = format!("{SE_CURVE_HEADER}\n");
    for r in reports {
        let cols = [r.train_mse, r.dev_mse, r.lr, r.seconds].map(num);
        writeln!(out, "{},{}", r.epoch, cols.join(",")).unwrap();
    }
    write_atomic(path, out.as_bytes())
}

/// Parse a file written by [`emit_curves`]. `dev_mse` is not part of the
/// file and comes back as NaN.
pub fn read_curves(path: &Path) -> Result<Vec<EpochReport>> {
    let body = text(path)?;
    data_rows(path, &body, CURVE_HEADER)?
        .into_iter()
        .map(|f| {
            let epoch = f[0]
                .parse()
                .map_err(|_| Error::format(path, format!("bad epoch {:?}", f[0])))?;
            let v: Vec<f64> = f[1..].iter().map(|s| parse_f64(path, s)).collect::<Result<_>>()?;
            Ok(EpochReport {
                epoch,
                train_mse: v[0],
                train_nll: v[1],
                dev_nll: v[2],
                dev_fer: v[3],
                dev_mse: f64::NAN,
                lr: v[4],
                seconds: v[5],
            })
        })
        .collect()
}

impl EvalSummary {
    /// Writes `path` (one summary row) and `<stem>_confusion.csv` beside it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mse = self.mse.map(num).unwrap_or_default();
        let body = format!(
            "{SUMMARY_HEADER}\n{},{},{},{}\n",
            self.num_frames,
            num(self.fer),
            num(self.nll),
            mse
        );
        let k = self.num_classes();
        let mut conf = String::from("label");
        for j in 0..k {
            write!(conf, ",pred_{j}").unwrap();
        }
        conf.push('\n');
        for i in 0..k {
            write!(conf, "{i}").unwrap();
            for j in 0..k {
                write!(conf, ",{}", self.confusion[[i, j]]).unwrap();
            }
            conf.push('\n');
        }
        write_atomic(&confusion_path(path), conf.as_bytes())?;
        write_atomic(path, body.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = text(path)?;
        let rows = data_rows(path, &body, SUMMARY_HEADER)?;
        let [row] = rows.as_slice() else {
            return Err(Error::format(path, "expected exactly one summary row"));
        };
        let num_frames: usize = row[0]
            .parse()
            .map_err(|_| Error::format(path, "bad frame count"))?;
        let fer = parse_f64(path, row[1])?;
        let nll = parse_f64(path, row[2])?;
        let mse = if row[3].is_empty() { None } else { Some(parse_f64(path, row[3])?) };

        let cpath = confusion_path(path);
        let cbody = text(&cpath)?;
        let mut lines = cbody.lines().filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::format(&cpath, "empty file"))?;
        let k = header.split(',').count() - 1;
        let mut confusion = Array2::zeros((k, k));
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            if i >= k || f.len() != k + 1 {
                return Err(Error::format(&cpath, format!("malformed row {line:?}")));
            }
            for j in 0..k {
                confusion[[i, j]] = f[j + 1]
                    .parse()
                    .map_err(|_| Error::format(&cpath, format!("bad count {:?}", f[j + 1])))?;
            }
            seen += 1;
        }
        if seen != k {
            return Err(Error::format(&cpath, format!("expected {k} rows, found {seen}")));
        }
        if confusion.sum() != num_frames as u64 {
            return Err(Error::format(&cpath, "confusion counts do not sum to num_frames"));
        }
        Ok(EvalSummary { num_frames, fer, nll, mse, confusion })
    }
}

fn confusion_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("summary");
    path.with_file_name(format!("{stem}_confusion.csv"))
}

/// One row per named system: `system,num_frames,fer,nll,mse`.
pub fn compare_table(rows: &[(String, EvalSummary)]) -> String {
    let mut out = String::from("system,num_frames,fer,nll,mse\n");
    for (name, s) in rows {
        let mse = s.mse.map(|m| format!("{m:.6}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{name},{},{:.6},{:.6},{mse}", s.num_frames, s.fer, s.nll).unwrap();
    }
    out
}
