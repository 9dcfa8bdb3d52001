use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{LabelField, LatticeGeometry, Order};
use crate::potts::{bond_count, expected_bonds_curve, validate_grid, BondsPoint};
use crate::seed::RngSeed;

/// Monte Carlo settings for each grid point of a table build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TdiSettings {
    pub sweeps: usize,
    pub burn_in: usize,
}

impl Default for TdiSettings {
    fn default() -> Self {
        TdiSettings {
            sweeps: 2000,
            burn_in: 500,
        }
    }
}

/// Grid with step 0.01 over [0, 0.9] (first order) or [0, 0.5] (second order).
pub fn default_tdi_grid(order: Order) -> Vec<f64> {
    let last = match order {
        Order::First => 90,
        Order::Second => 50,
    };
    (0..=last).map(|k| k as f64 / 100.0).collect()
}

/// Offline table of `log C(beta)` obtained by integrating `E[U | beta]`,
/// with Monte Carlo standard errors carried through the quadrature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TdiTable {
    pub rows: usize,
    pub cols: usize,
    pub order: Order,
    pub q: usize,
    pub geometry_hash: String,
    pub beta_grid: Vec<f64>,
    pub log_c: Vec<f64>,
    pub se: Vec<f64>,
}

/// Build a table by the trapezoid rule over a Gibbs estimate of the
/// expected bond count at each grid point. Grid points run independent
/// chains, so the quadrature variance is the weighted sum of point variances.
pub fn build_tdi_table(
    geometry: &LatticeGeometry,
    q: usize,
    beta_grid: &[f64],
    settings: &TdiSettings,
    seed: RngSeed,
) -> Result<TdiTable> {
    validate_grid(beta_grid)?;
    let curve = expected_bonds_curve(geometry, q, beta_grid, settings.sweeps, settings.burn_in, seed)?;
    TdiTable::from_curve(geometry, q, &curve)
}

impl TdiTable {
    /// Trapezoid integration of an expected-bond curve starting at beta = 0.
    pub fn from_curve(geometry: &LatticeGeometry, q: usize, curve: &[BondsPoint]) -> Result<Self> {
        let beta_grid: Vec<f64> = curve.iter().map(|p| p.beta).collect();
        validate_grid(&beta_grid)?;
        let base = geometry.n_present() as f64 * (q as f64).ln();
        let mut log_c = vec![base];
        let mut se = vec![0.0];
        for k in 1..beta_grid.len() {
            let h = beta_grid[k] - beta_grid[k - 1];
            log_c.push(log_c[k - 1] + 0.5 * h * (curve[k - 1].mean_u + curve[k].mean_u));
            // Weight of point j in the integral up to k.
            let var: f64 = (0..=k)
                .map(|j| {
                    let left = if j > 0 { beta_grid[j] - beta_grid[j - 1] } else { 0.0 };
                    let right = if j < k { beta_grid[j + 1] - beta_grid[j] } else { 0.0 };
                    let w = 0.5 * (left + right);
                    w * w * curve[j].se_u * curve[j].se_u
                })
                .sum();
            se.push(var.sqrt());
        }
        Ok(TdiTable {
            rows: geometry.rows(),
            cols: geometry.cols(),
            order: geometry.order(),
            q,
            geometry_hash: geometry.content_hash(),
            beta_grid,
            log_c,
            se,
        })
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_grid[0], *self.beta_grid.last().expect("non-empty grid"))
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.beta_range();
        a <= lo && hi <= b
    }

    /// Piecewise-linear interpolation of `log C`; no extrapolation.
    pub fn interpolate(&self, beta: f64) -> Result<f64> {
        let (lo, hi) = self.beta_range();
        if !(lo..=hi).contains(&beta) {
            return Err(Error::Range(format!(
                "beta {beta} outside the integration table range [{lo}, {hi}]"
            )));
        }
        let k = self.beta_grid.partition_point(|&b| b <= beta);
        if k >= self.beta_grid.len() {
            return Ok(*self.log_c.last().unwrap());
        }
        let (b0, b1) = (self.beta_grid[k - 1], self.beta_grid[k]);
        let w = (beta - b0) / (b1 - b0);
        Ok(self.log_c[k - 1] + w * (self.log_c[k] - self.log_c[k - 1]))
    }

    pub fn geometry(&self) -> Result<LatticeGeometry> {
        LatticeGeometry::new(self.rows, self.cols, self.order)
    }

    pub fn check_compatible(&self, geometry: &LatticeGeometry, q: usize) -> Result<()> {
        if geometry.content_hash() != self.geometry_hash || q != self.q {
            return Err(Error::Mismatch(format!(
                "integration table was built for a {}x{} {} order lattice with q={}; got {}x{} {} order with q={q}",
                self.rows,
                self.cols,
                self.order,
                self.q,
                geometry.rows(),
                geometry.cols(),
                geometry.order()
            )));
        }
        Ok(())
    }

    /// CSV with a `#` metadata line followed by `beta,logC,se` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# rows={} cols={} order={} q={} geometry={}",
            self.rows, self.cols, self.order, self.q, self.geometry_hash
        )?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta", "logC", "se"])?;
        for ((b, c), s) in self.beta_grid.iter().zip(&self.log_c).zip(&self.se) {
            w.write_record([b.to_string(), c.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut meta = String::new();
        input.read_line(&mut meta)?;
        let meta = meta
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("integration table is missing its metadata line".into()))?;
        let field = |key: &str| -> Result<&str> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("integration table metadata lacks '{key}'")))
        };
        let num = |key: &str| -> Result<usize> {
            field(key)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad '{key}' in table metadata")))
        };
        let (rows, cols, q) = (num("rows")?, num("cols")?, num("q")?);
        let order: Order = field("order")?.parse()?;
        let geometry_hash = field("geometry")?.to_string();

        let mut reader = csv::Reader::from_reader(input);
        let (mut beta_grid, mut log_c, mut se) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("bad table row {rec:?}")))
            };
            beta_grid.push(parse(0)?);
            log_c.push(parse(1)?);
            se.push(parse(2)?);
        }
        validate_grid(&beta_grid)?;
        let table = TdiTable {
            rows,
            cols,
            order,
            q,
            geometry_hash,
            beta_grid,
            log_c,
            se,
        };
        if table.geometry()?.content_hash() != table.geometry_hash {
            return invalid("integration table geometry hash does not match its dimensions");
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// `beta * U(z) - log C(beta)` with `log C` read from the table.
pub fn tdi_loglik(field: &LabelField, q: usize, beta: f64, table: &TdiTable) -> Result<f64> {
    let geometry = table.geometry()?;
    table.check_compatible(&geometry, q)?;
    if field.q() != q {
        return Err(Error::Mismatch(format!("field has q={} but q={q} requested", field.q())));
    }
    let u = bond_count(&geometry, field)? as f64;
    Ok(beta * u - table.interpolate(beta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_table() -> TdiTable {
        let g = LatticeGeometry::new(3, 3, Order::First).unwrap();
        build_tdi_table(&g, 2, &[0.0, 0.1, 0.2, 0.3], &TdiSettings { sweeps: 200, burn_in: 20 }, RngSeed(4))
            .unwrap()
    }

    #[test]
    fn origin_is_exact() {
        let t = small_table();
        assert_eq!(t.log_c[0], 9.0 * 2f64.ln());
        assert_eq!(t.se[0], 0.0);
        assert!(t.se.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn interpolation_and_range() {
        let t = small_table();
        let mid = t.interpolate(0.15).unwrap();
        assert!((mid - 0.5 * (t.log_c[1] + t.log_c[2])).abs() < 1e-12);
        assert_eq!(t.interpolate(0.3).unwrap(), t.log_c[3]);
        assert!(matches!(t.interpolate(0.31), Err(Error::Range(_))));
        assert!(matches!(t.interpolate(-0.01), Err(Error::Range(_))));
    }

    #[test]
    fn grid_must_start_at_zero() {
        let g = LatticeGeometry::new(3, 3, Order::First).unwrap();
        assert!(build_tdi_table(&g, 2, &[0.1, 0.2], &TdiSettings::default(), RngSeed(1)).is_err());
    }

    #[test]
    fn csv_round_trip_and_hash_guard() {
        let t = small_table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TdiTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        let other = LatticeGeometry::new(3, 3, Order::Second).unwrap();
        assert!(back.check_compatible(&other, 2).is_err());
        let tampered = String::from_utf8(buf).unwrap().replacen("rows=3", "rows=4", 1);
        assert!(TdiTable::read_csv(tampered.as_bytes()).is_err());
    }

    #[test]
    fn loglik_is_affine_in_bonds() {
        let t = small_table();
        let low = LabelField::from_one_based(3, 3, 2, &[1, 2, 1, 2, 1, 2, 1, 2, 1]).unwrap();
        let high = LabelField::constant(3, 3, 2, 0).unwrap();
        let beta = 0.2;
        assert!(tdi_loglik(&high, 2, beta, &t).unwrap() > tdi_loglik(&low, 2, beta, &t).unwrap());
        assert!((tdi_loglik(&low, 2, 0.0, &t).unwrap() + 9.0 * 2f64.ln()).abs() < 1e-12);
    }
}
