//! Grid-indexed SCSI store.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::estimators::correlation::{build_correlations, ScsiCorrelations};
use crate::scene::{layout_from_meta, parse_path_table, write_path_rows, PathSet, SceneError};
use crate::SystemConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbError {
    #[error("location ({0}, {1}) is outside the coverage area")]
    OutOfCoverage(f64, f64),
    #[error("grid {0} not present in the database")]
    MissingGrid(usize),
    #[error("grid {0} already present")]
    Duplicate(usize),
    #[error("invalid record for grid {0}: {1}")]
    InvalidRecord(usize, String),
    #[error(transparent)]
    Format(#[from] SceneError),
}

/// Rectangular coverage area of `cols × rows` square cells of side `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub origin: [f64; 2],
    pub d: f64,
    pub cols: usize,
    pub rows: usize,
}

impl GridLayout {
    pub fn new(origin: [f64; 2], d: f64, cols: usize, rows: usize) -> Self {
        Self { origin, d, cols, rows }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major cell index of `q`. The far edges of the rectangle belong to the
    /// last row/column.
    pub fn grid_of_location(&self, q: [f64; 2]) -> Result<usize, DbError> {
        let out = || DbError::OutOfCoverage(q[0], q[1]);
        let cell = |x: f64, o: f64, n: usize| -> Option<usize> {
            let t = (x - o) / self.d;
            if !(t >= 0.0) || t > n as f64 {
                return None;
            }
            Some((t.floor() as usize).min(n - 1))
        };
        let c = cell(q[0], self.origin[0], self.cols).ok_or_else(out)?;
        let r = cell(q[1], self.origin[1], self.rows).ok_or_else(out)?;
        Ok(r * self.cols + c)
    }

    pub fn centre(&self, g: usize) -> [f64; 2] {
        let (r, c) = (g / self.cols, g % self.cols);
        [
            self.origin[0] + (c as f64 + 0.5) * self.d,
            self.origin[1] + (r as f64 + 0.5) * self.d,
        ]
    }

    /// Uniform random position inside cell `g`.
    pub fn sample_in<R: Rng + ?Sized>(&self, g: usize, rng: &mut R) -> [f64; 2] {
        let (r, c) = (g / self.cols, g % self.cols);
        [
            self.origin[0] + (c as f64 + rng.random::<f64>()) * self.d,
            self.origin[1] + (r as f64 + rng.random::<f64>()) * self.d,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScsiRecord {
    pub grid_id: usize,
    pub paths: PathSet,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DbMeta {
    pub n_d: usize,
    /// `None` for noiseless construction.
    pub snr_sc_db: Option<f64>,
    /// Unix seconds.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScsiDatabase {
    pub layout: GridLayout,
    pub meta: DbMeta,
    records: BTreeMap<usize, ScsiRecord>,
}

impl ScsiDatabase {
    pub fn new(layout: GridLayout, meta: DbMeta) -> Self {
        Self { layout, meta, records: BTreeMap::new() }
    }

    pub fn insert(&mut self, rec: ScsiRecord) -> Result<(), DbError> {
        let g = rec.grid_id;
        if g >= self.layout.len() {
            return Err(DbError::InvalidRecord(g, "grid id beyond layout".into()));
        }
        if rec.paths.is_empty() {
            return Err(DbError::InvalidRecord(g, "no paths".into()));
        }
        if let Some(p) = rec.paths.paths.iter().find(|p| {
            !(p.rho >= 0.0) || !(p.tau >= 0.0) || !(p.theta > 0.0 && p.theta < std::f64::consts::PI)
                || !(p.phi > 0.0 && p.phi < std::f64::consts::PI)
        }) {
            return Err(DbError::InvalidRecord(g, format!("parameters out of range: {p:?}")));
        }
        if self.records.contains_key(&g) {
            return Err(DbError::Duplicate(g));
        }
        self.records.insert(g, rec);
        Ok(())
    }

    pub fn lookup(&self, grid_id: usize) -> Result<&ScsiRecord, DbError> {
        self.records.get(&grid_id).ok_or(DbError::MissingGrid(grid_id))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.layout.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &ScsiRecord> {
        self.records.values()
    }

    /// SCSI correlations for a user at position `q`.
    pub fn correlations_for_user(
        &self,
        q: [f64; 2],
        cfg: &SystemConfig,
    ) -> Result<ScsiCorrelations, DbError> {
        let g = self.layout.grid_of_location(q)?;
        Ok(build_correlations(&self.lookup(g)?.paths, cfg))
    }

    pub fn to_csv(&self) -> String {
        let lbar = self.records.values().map(|r| r.paths.len()).max().unwrap_or(0);
        let snr = self.meta.snr_sc_db.map_or("none".to_string(), |v| v.to_string());
        let mut s = String::new();
        let _ = writeln!(
            s,
            "#scsidb v1, d={}, U={}, Lbar={}, cols={}, origin_x={}, origin_y={}, n_d={}, snr_sc_db={}, timestamp={}",
            self.layout.d,
            self.layout.len(),
            lbar,
            self.layout.cols,
            self.layout.origin[0],
            self.layout.origin[1],
            self.meta.n_d,
            snr,
            self.meta.timestamp
        );
        let grids: Vec<PathSet> = (0..self.layout.len())
            .map(|g| self.records.get(&g).map(|r| r.paths.clone()).unwrap_or_default())
            .collect();
        write_path_rows(&mut s, &grids);
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, DbError> {
        let (meta, grids) = parse_path_table(text, "#scsidb v1")?;
        let layout = layout_from_meta(&meta, grids.len())?;
        let parse_err = |k: &str| SceneError::Parse(format!("bad {k}"));
        let n_d = meta
            .get("n_d")
            .map(|v| v.parse::<usize>().map_err(|_| parse_err("n_d")))
            .transpose()?
            .unwrap_or(0);
        let snr_sc_db = match meta.get("snr_sc_db").map(String::as_str) {
            None | Some("none") => None,
            Some(v) => Some(v.parse::<f64>().map_err(|_| parse_err("snr_sc_db"))?),
        };
        let timestamp = meta
            .get("timestamp")
            .map(|v| v.parse::<u64>().map_err(|_| parse_err("timestamp")))
            .transpose()?
            .unwrap_or(0);
        let mut db = Self::new(layout, DbMeta { n_d, snr_sc_db, timestamp });
        for (g, paths) in grids.into_iter().enumerate() {
            db.insert(ScsiRecord { grid_id: g, paths })?;
        }
        Ok(db)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::PathParams;
    use proptest::prelude::*;

    fn layout() -> GridLayout {
        GridLayout::new([10.0, -4.0], 2.0, 4, 3)
    }

    #[test]
    fn mapping_examples() {
        let l = layout();
        assert_eq!(l.grid_of_location(l.origin).unwrap(), 0);
        assert_eq!(l.grid_of_location([10.0 + 3.0, -4.0]).unwrap(), 1);
        assert_eq!(l.grid_of_location([18.0, 2.0]).unwrap(), 11);
        assert!(l.grid_of_location([9.99, 0.0]).is_err());
        assert!(l.grid_of_location([18.01, 0.0]).is_err());
        assert!(l.grid_of_location([f64::NAN, 0.0]).is_err());
    }

    fn record(g: usize, tau: f64) -> ScsiRecord {
        ScsiRecord {
            grid_id: g,
            paths: PathSet::new(vec![
                PathParams::new(tau, 1.234567890123, 0.3, 0.75),
                PathParams::new(tau * 3.1, 2.0, 2.9, 0.25),
            ]),
        }
    }

    #[test]
    fn lookup_and_round_trip() {
        let mut db = ScsiDatabase::new(layout(), DbMeta { n_d: 32, snr_sc_db: Some(10.0), timestamp: 7 });
        for g in 0..12 {
            db.insert(record(g, 1e-7 * (g + 1) as f64 / 3.0)).unwrap();
        }
        assert_eq!(db.lookup(3).unwrap(), &record(3, 4e-7 / 3.0));
        assert_eq!(db.lookup(12).unwrap_err(), DbError::MissingGrid(12));
        assert!(matches!(db.insert(record(3, 1e-7)), Err(DbError::Duplicate(3))));
        let back = ScsiDatabase::from_csv(&db.to_csv()).unwrap();
        assert_eq!(back, db);
    }

    #[test]
    fn identical_records_identical_correlations() {
        let mut db = ScsiDatabase::new(layout(), DbMeta::default());
        db.insert(record(0, 2e-7)).unwrap();
        db.insert(ScsiRecord { grid_id: 5, ..record(0, 2e-7) }).unwrap();
        let cfg = SystemConfig::desk();
        let a = db.correlations_for_user(db.layout.centre(0), &cfg).unwrap();
        let b = db.correlations_for_user(db.layout.centre(5), &cfg).unwrap();
        assert_eq!(a.r_f, b.r_f);
        assert_eq!(a.r_s, b.r_s);
        assert!(db.correlations_for_user(db.layout.centre(1), &cfg).is_err());
    }

    proptest! {
        #[test]
        fn mapping_matches_floor_oracle(x in 10.0f64..18.0, y in -4.0f64..2.0) {
            let l = layout();
            let g = l.grid_of_location([x, y]).unwrap();
            let c = ((x - 10.0) / 2.0).floor() as usize;
            let r = ((y + 4.0) / 2.0).floor() as usize;
            prop_assert_eq!(g, r * 4 + c);
            prop_assert_eq!(l.grid_of_location([x, y]).unwrap(), g);
        }

        #[test]
        fn sampled_points_land_in_their_cell(g in 0usize..12, seed in any::<u64>()) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let l = layout();
            prop_assert_eq!(l.grid_of_location(l.sample_in(g, &mut rng)).unwrap(), g);
        }
    }
}
