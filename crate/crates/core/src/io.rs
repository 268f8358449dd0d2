//! File formats: loss-history CSV, portable graymaps, key=value summaries and
//! parameter vectors.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::burgers::BurgersRecord;
use crate::grid::{write_field_csv, Field, Grid};
use crate::optim::LossBreakdown;
use crate::Error;

pub const HISTORY_HEADER: &str =
    "epoch,J,R1sq,R2sq,R3sq,C1sq,R1sq_scaled,R2sq_scaled,R3sq_scaled,C1sq_scaled,alpha3,alpha4,mu_p,lr,grad_ref,grad_mean3,grad_mean4";

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn write_history<W: Write>(mut w: W, history: &[LossBreakdown]) -> std::io::Result<()> {
    writeln!(w, "{HISTORY_HEADER}")?;
    for h in history {
        let t = &h.terms;
        let s = h.scaled();
        let g = &h.stats;
        let vals = [
            t.j, t.r1_sq, t.r2_sq, t.r3_sq, t.c1_sq, s[0], s[1], s[2], s[3], h.alpha[2], h.alpha[3], h.mu, h.lr,
            g.reference_max, g.mean[0], g.mean[1],
        ];
        let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{},{}", h.epoch, line.join(","))?;
    }
    Ok(())
}

pub fn save_history(path: &Path, history: &[LossBreakdown]) -> Result<(), Error> {
    let mut w = create(path)?;
    write_history(&mut w, history).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Parses a history CSV into `(epoch, values)` rows.
pub fn read_history<R: BufRead>(r: R) -> Result<Vec<(usize, Vec<f64>)>, Error> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == HISTORY_HEADER => {}
        _ => return Err(Error::Parse("history csv: missing header".into())),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let mut parts = line.trim().split(',');
        let epoch = parts
            .next()
            .and_then(|e| e.parse().ok())
            .ok_or_else(|| Error::Parse(format!("history csv: bad epoch in `{line}`")))?;
        let vals = parts
            .map(|p| p.parse::<f64>().map_err(|_| Error::Parse(format!("history csv: bad value `{p}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((epoch, vals));
    }
    Ok(rows)
}

pub const BURGERS_HEADER: &str = "epoch,loss,residual,sample_error,lr";

pub fn write_burgers_history<W: Write>(mut w: W, history: &[BurgersRecord]) -> std::io::Result<()> {
    writeln!(w, "{BURGERS_HEADER}")?;
    for h in history {
        writeln!(w, "{},{:.16e},{:.16e},{:.16e},{:.16e}", h.epoch, h.loss, h.residual, h.sample_error, h.lr)?;
    }
    Ok(())
}

pub fn save_burgers_history(path: &Path, history: &[BurgersRecord]) -> Result<(), Error> {
    let mut w = create(path)?;
    write_burgers_history(&mut w, history).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn save_field(path: &Path, field: &Field, grid: &Grid) -> Result<(), Error> {
    let mut w = create(path)?;
    write_field_csv(&mut w, field, grid).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Binary graymap, one byte per cell, top row first; 0 is black (solid), 1 white (fluid).
pub fn write_pgm<W: Write>(mut w: W, field: &Field) -> std::io::Result<()> {
    let (nx, ny) = (field.nx(), field.ny());
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    let mut bytes = Vec::with_capacity(nx * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            bytes.push((field.at(i, j).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    w.write_all(&bytes)
}

pub fn save_pgm(path: &Path, field: &Field) -> Result<(), Error> {
    let mut w = create(path)?;
    write_pgm(&mut w, field).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

/// Flat `key=value` lines in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues(pub Vec<(String, String)>);

impl KeyValues {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.0 {
            writeln!(w, "{k}={v}")?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut out = KeyValues::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("summary line without `=`: `{line}`")))?;
            out.push(k.trim(), v.trim());
        }
        Ok(out)
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.0.iter().cloned().collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        let mut w = create(path)?;
        self.write(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
    }
}

/// One value per line with 17 significant digits, so reloading is exact.
pub fn save_vector(path: &Path, values: &[f64]) -> Result<(), Error> {
    let mut w = create(path)?;
    let mut write = || -> std::io::Result<()> {
        for v in values {
            writeln!(w, "{v:.16e}")?;
        }
        w.flush()
    };
    write().map_err(|e| io_err(path, e))
}

pub fn load_vector(path: &Path) -> Result<Vec<f64>, Error> {
    let r = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    r.lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| {
            let l = l.map_err(|e| io_err(path, e))?;
            l.trim().parse::<f64>().map_err(|_| Error::Parse(format!("{}: bad value `{l}`", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TermValues;
    use crate::optim::GradStats;

    fn record(epoch: usize, j: f64) -> LossBreakdown {
        LossBreakdown {
            epoch,
            terms: TermValues { j, r1_sq: 1.0 / 3.0, r2_sq: 2e-300, r3_sq: 7.5, c1: -0.1, c1_sq: 0.01 },
            alpha: [1.0, 1.0, 3.25, 1e6],
            mu: 1.05,
            lr: 1e-3,
            stats: GradStats { reference_max: 9e5, mean: [1e-2, 3.5] },
        }
    }

    #[test]
    fn history_round_trips_exactly() {
        let hist = vec![record(1, std::f64::consts::PI), record(2, 0.1 + 0.2)];
        let mut buf = Vec::new();
        write_history(&mut buf, &hist).unwrap();
        let rows = read_history(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].0, 2);
        let h = &hist[1];
        let s = h.scaled();
        let want = [h.terms.j, 1.0 / 3.0, 2e-300, 7.5, 0.01, s[0], s[1], s[2], s[3], 3.25, 1e6, 1.05, 1e-3, 9e5, 1e-2, 3.5];
        assert_eq!(rows[1].1, want);
    }

    #[test]
    fn pgm_layout() {
        let g = Grid::unit_square(3, 3).unwrap();
        let f = Field::from_fn(&g, |x, y| if y == 1.0 { x } else { 0.0 });
        let mut buf = Vec::new();
        write_pgm(&mut buf, &f).unwrap();
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&buf[..header.len()], header);
        // top row (y = 1) comes first
        assert_eq!(&buf[header.len()..header.len() + 3], &[0, 128, 255]);
        assert_eq!(buf.len(), header.len() + 9);
    }

    #[test]
    fn summary_and_vector_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut kv = KeyValues::default();
        kv.push("J", 30.75);
        kv.push("benchmark", "diffuser");
        let p = dir.path().join("summary.txt");
        kv.save(&p).unwrap();
        let back = KeyValues::parse(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(back, kv);
        assert_eq!(back.get("J"), Some("30.75"));
        assert!(KeyValues::parse("nonsense").is_err());

        let v = vec![0.1, -1e-300, 12345.678901234567, f64::MIN_POSITIVE];
        let p = dir.path().join("theta.txt");
        save_vector(&p, &v).unwrap();
        assert_eq!(load_vector(&p).unwrap(), v);
        let missing = dir.path().join("nope").join("x.csv");
        let err = save_vector(&missing, &v).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }
}
