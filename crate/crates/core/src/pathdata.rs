//! Multipath data model, dataset CSV (de)serialization and LOS/NLOS/DS
//! condition classification.
//!
//! A dataset lives in two files: a CSV with one row per (receiver, path)
//! and a JSON sidecar `<stem>.meta.json` holding scenario metadata.
//!
//! ```text
//! rx_id,rx_x_m,rx_y_m,rx_z_m,power_dbm,delay_ns,aod_az_deg,aod_el_deg,aoa_az_deg,aoa_el_deg,interactions
//! 0,1,0,0,-41.39,3.3356,0,0,180,0,L
//! 0,1,0,0,-55.1,9.02,33.7,0,146.3,0,R
//! 1,9,3,1,-INF,,,,,,
//! ```
//!
//! Powers are kept in dBm on the data model and converted to linear
//! milliwatts by [`MultipathComponent::power_mw`], the single conversion
//! point used by every power-weighted statistic.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linksim::LinkBudget;
use crate::stats::db_to_linear;

pub const CSV_HEADER: [&str; 11] = [
    "rx_id",
    "rx_x_m",
    "rx_y_m",
    "rx_z_m",
    "power_dbm",
    "delay_ns",
    "aod_az_deg",
    "aod_el_deg",
    "aoa_az_deg",
    "aoa_el_deg",
    "interactions",
];

/// Tolerance on the stored 3-D distance against the TX/RX positions.
const DISTANCE_TOL_M: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("rx {rx_id}: {msg}")]
    Validation { rx_id: u32, msg: String },
    #[error("metadata: {0}")]
    Meta(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Propagation mechanism a path went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Interaction {
    Direct,
    Reflect,
    Diffract,
    DiffuseScatter,
}

impl Interaction {
    pub fn tag(self) -> char {
        match self {
            Interaction::Direct => 'L',
            Interaction::Reflect => 'R',
            Interaction::Diffract => 'D',
            Interaction::DiffuseScatter => 'S',
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "L" => Some(Interaction::Direct),
            "R" => Some(Interaction::Reflect),
            "D" => Some(Interaction::Diffract),
            "S" => Some(Interaction::DiffuseScatter),
            _ => None,
        }
    }
}

/// `+`-joined tag string, e.g. `R+R+D`.
pub fn format_interactions(tags: &[Interaction]) -> String {
    let mut out = String::with_capacity(tags.len() * 2);
    for (i, t) in tags.iter().enumerate() {
        if i > 0 {
            out.push('+');
        }
        out.push(t.tag());
    }
    out
}

pub fn parse_interactions(s: &str) -> Result<Vec<Interaction>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split('+')
        .map(|t| {
            Interaction::from_tag(t.trim()).ok_or_else(|| format!("unknown interaction tag {t:?}"))
        })
        .collect()
}

/// Reception condition of a receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOS")]
    Nlos,
    #[serde(rename = "DS")]
    Ds,
    Outage,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Los,
        Condition::Nlos,
        Condition::Ds,
        Condition::Outage,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Los => "LOS",
            Condition::Nlos => "NLOS",
            Condition::Ds => "DS",
            Condition::Outage => "Outage",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "LOS" => Ok(Condition::Los),
            "NLOS" => Ok(Condition::Nlos),
            "DS" => Ok(Condition::Ds),
            "OUTAGE" => Ok(Condition::Outage),
            _ => Err(format!("unknown condition {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathComponent {
    pub power_dbm: f64,
    pub delay_ns: f64,
    pub aod_az_deg: f64,
    pub aod_el_deg: f64,
    pub aoa_az_deg: f64,
    pub aoa_el_deg: f64,
    pub interactions: Vec<Interaction>,
}

impl MultipathComponent {
    pub fn power_mw(&self) -> f64 {
        db_to_linear(self.power_dbm)
    }

    pub fn is_direct(&self) -> bool {
        self.interactions == [Interaction::Direct]
    }

    /// Checks the per-path invariants; the message names the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if !self.power_dbm.is_finite() {
            return Err(format!("power_dbm {} is not finite", self.power_dbm));
        }
        if !(self.delay_ns > 0.0) || !self.delay_ns.is_finite() {
            return Err(format!("delay_ns {} must be positive", self.delay_ns));
        }
        for (name, az) in [
            ("aod_az_deg", self.aod_az_deg),
            ("aoa_az_deg", self.aoa_az_deg),
        ] {
            if !(az > -180.0 && az <= 180.0) {
                return Err(format!("{name} {az} outside (-180, 180]"));
            }
        }
        for (name, el) in [
            ("aod_el_deg", self.aod_el_deg),
            ("aoa_el_deg", self.aoa_el_deg),
        ] {
            if !(-90.0..=90.0).contains(&el) {
                return Err(format!("{name} {el} outside [-90, 90]"));
            }
        }
        if self.interactions.is_empty() {
            return Err("path has no interaction tags".into());
        }
        if self.interactions.len() > 1 && self.interactions.contains(&Interaction::Direct) {
            return Err("Direct tag must appear alone".into());
        }
        Ok(())
    }
}

/// LOS if a bare direct path exists, DS if every path carries a diffuse
/// scattering interaction, Outage if there are no paths, NLOS otherwise.
pub fn classify(paths: &[MultipathComponent]) -> Condition {
    if paths.is_empty() {
        Condition::Outage
    } else if paths.iter().any(MultipathComponent::is_direct) {
        Condition::Los
    } else if paths
        .iter()
        .all(|p| p.interactions.contains(&Interaction::DiffuseScatter))
    {
        Condition::Ds
    } else {
        Condition::Nlos
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxRecord {
    pub rx_id: u32,
    pub position_m: [f64; 3],
    pub distance_3d_m: f64,
    pub paths: Vec<MultipathComponent>,
    pub condition: Condition,
}

impl RxRecord {
    /// Builds a record, computing distance and condition.
    pub fn new(
        rx_id: u32,
        position_m: [f64; 3],
        tx_position_m: [f64; 3],
        paths: Vec<MultipathComponent>,
    ) -> Self {
        let condition = classify(&paths);
        Self {
            rx_id,
            position_m,
            distance_3d_m: distance(position_m, tx_position_m),
            paths,
            condition,
        }
    }

    /// Total received power in linear mW.
    pub fn total_power_mw(&self) -> f64 {
        crate::stats::compensated_sum(self.paths.iter().map(MultipathComponent::power_mw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic,
    Ingested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDataset {
    pub scenario_name: String,
    pub tx_position_m: [f64; 3],
    pub link_budget: LinkBudget,
    pub records: Vec<RxRecord>,
    pub provenance: Provenance,
}

impl ScenarioDataset {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut seen = std::collections::HashSet::with_capacity(self.records.len());
        for r in &self.records {
            let bad = |msg: String| DatasetError::Validation {
                rx_id: r.rx_id,
                msg,
            };
            if !seen.insert(r.rx_id) {
                return Err(bad("duplicate rx_id".into()));
            }
            if r.position_m.iter().any(|c| !c.is_finite()) {
                return Err(bad("non-finite position".into()));
            }
            let d = distance(r.position_m, self.tx_position_m);
            if (d - r.distance_3d_m).abs() > DISTANCE_TOL_M {
                return Err(bad(format!(
                    "distance_3d_m {} disagrees with geometry {d}",
                    r.distance_3d_m
                )));
            }
            for p in &r.paths {
                p.validate().map_err(bad)?;
            }
            if r.condition != classify(&r.paths) {
                return Err(bad(format!(
                    "condition {} inconsistent with paths",
                    r.condition
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self, condition: Condition) -> usize {
        self.records
            .iter()
            .filter(|r| r.condition == condition)
            .count()
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Sidecar metadata file stored next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    scenario_name: String,
    tx_position_m: [f64; 3],
    link_budget: LinkBudget,
    provenance: Provenance,
}

/// `<dir>/<stem>.meta.json` for a dataset at `<dir>/<stem>.csv`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_f64(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-INF".to_string()
    } else {
        // shortest round-trip representation
        format!("{x}")
    }
}

/// Serializes the CSV body of a dataset.
pub fn write_csv<W: io::Write>(ds: &ScenarioDataset, out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &ds.records {
        let id = r.rx_id.to_string();
        let [x, y, z] = r.position_m.map(fmt_f64);
        if r.paths.is_empty() {
            w.write_record([id.as_str(), &x, &y, &z, "-INF", "", "", "", "", "", ""])?;
            continue;
        }
        for p in &r.paths {
            w.write_record([
                id.clone(),
                x.clone(),
                y.clone(),
                z.clone(),
                fmt_f64(p.power_dbm),
                fmt_f64(p.delay_ns),
                fmt_f64(p.aod_az_deg),
                fmt_f64(p.aod_el_deg),
                fmt_f64(p.aoa_az_deg),
                fmt_f64(p.aoa_el_deg),
                format_interactions(&p.interactions),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &ScenarioDataset, path: &Path) -> Result<(), DatasetError> {
    ds.validate()?;
    let mut buf = Vec::new();
    write_csv(ds, &mut buf).map_err(|e| DatasetError::Meta(e.to_string()))?;
    let meta = DatasetMeta {
        scenario_name: ds.scenario_name.clone(),
        tx_position_m: ds.tx_position_m,
        link_budget: ds.link_budget.clone(),
        provenance: ds.provenance,
    };
    let meta_json =
        serde_json::to_string_pretty(&meta).map_err(|e| DatasetError::Meta(e.to_string()))?;
    fs::write(path, buf).map_err(io_err(path))?;
    let mp = meta_path(path);
    fs::write(&mp, meta_json + "\n").map_err(io_err(&mp))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<ScenarioDataset, DatasetError> {
    let mp = meta_path(path);
    let meta_text = fs::read_to_string(&mp).map_err(io_err(&mp))?;
    let meta: DatasetMeta =
        serde_json::from_str(&meta_text).map_err(|e| DatasetError::Meta(e.to_string()))?;
    let file = fs::File::open(path).map_err(io_err(path))?;
    let records = read_csv(file, meta.tx_position_m)?;
    let ds = ScenarioDataset {
        scenario_name: meta.scenario_name,
        tx_position_m: meta.tx_position_m,
        link_budget: meta.link_budget,
        records,
        provenance: meta.provenance,
    };
    ds.validate()?;
    Ok(ds)
}

struct RowGroup {
    rx_id: u32,
    position: [f64; 3],
    paths: Vec<MultipathComponent>,
    outage: bool,
    first_line: u64,
}

/// Parses dataset rows. An optional trailing `condition` column is accepted
/// and ignored; conditions are always recomputed from the paths.
pub fn read_csv<R: io::Read>(
    input: R,
    tx_position_m: [f64; 3],
) -> Result<Vec<RxRecord>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    let header_ok = got.len() >= CSV_HEADER.len()
        && got[..CSV_HEADER.len()] == CSV_HEADER
        && (got.len() == CSV_HEADER.len()
            || (got.len() == CSV_HEADER.len() + 1 && got[CSV_HEADER.len()] == "condition"));
    if !header_ok {
        return Err(DatasetError::Parse {
            line: 1,
            msg: format!("unexpected header {got:?}"),
        });
    }

    let mut groups: Vec<RowGroup> = Vec::new();
    let mut index: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| DatasetError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let perr = |msg: String| DatasetError::Parse { line, msg };
        if row.len() != headers.len() {
            return Err(perr(format!(
                "expected {} fields, found {}",
                headers.len(),
                row.len()
            )));
        }
        let num = |i: usize| -> Result<f64, DatasetError> {
            let s = &row[i];
            match s {
                "-INF" | "-inf" => Ok(f64::NEG_INFINITY),
                _ => s
                    .parse::<f64>()
                    .map_err(|_| perr(format!("{}: cannot parse {s:?}", CSV_HEADER[i]))),
            }
        };
        let rx_id: u32 = row[0]
            .parse()
            .map_err(|_| perr(format!("rx_id: cannot parse {:?}", &row[0])))?;
        let position = [num(1)?, num(2)?, num(3)?];
        let power = num(4)?;
        let tags = parse_interactions(&row[10]).map_err(perr)?;

        let gi = *index.entry(rx_id).or_insert_with(|| {
            groups.push(RowGroup {
                rx_id,
                position,
                paths: Vec::new(),
                outage: false,
                first_line: line,
            });
            groups.len() - 1
        });
        let g = &mut groups[gi];
        if g.position != position {
            return Err(perr(format!(
                "rx {rx_id}: position differs from line {}",
                g.first_line
            )));
        }
        let is_outage_row = power == f64::NEG_INFINITY && tags.is_empty();
        if is_outage_row {
            if g.outage || !g.paths.is_empty() {
                return Err(perr(format!(
                    "rx {rx_id}: outage row mixed with other rows"
                )));
            }
            g.outage = true;
            continue;
        }
        if g.outage {
            return Err(perr(format!(
                "rx {rx_id}: outage row mixed with other rows"
            )));
        }
        let path = MultipathComponent {
            power_dbm: power,
            delay_ns: num(5)?,
            aod_az_deg: num(6)?,
            aod_el_deg: num(7)?,
            aoa_az_deg: num(8)?,
            aoa_el_deg: num(9)?,
            interactions: tags,
        };
        path.validate()
            .map_err(|msg| DatasetError::Validation { rx_id, msg })?;
        g.paths.push(path);
    }

    Ok(groups
        .into_iter()
        .map(|g| RxRecord::new(g.rx_id, g.position, tx_position_m, g.paths))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Interaction::*;

    fn path(tags: &[Interaction]) -> MultipathComponent {
        MultipathComponent {
            power_dbm: -60.0,
            delay_ns: 10.0,
            aod_az_deg: 0.0,
            aod_el_deg: 0.0,
            aoa_az_deg: 0.0,
            aoa_el_deg: 0.0,
            interactions: tags.to_vec(),
        }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(
            classify(&[path(&[Direct]), path(&[Reflect])]),
            Condition::Los
        );
        assert_eq!(
            classify(&[path(&[Reflect, Reflect]), path(&[Diffract])]),
            Condition::Nlos
        );
        assert_eq!(
            classify(&[path(&[DiffuseScatter]), path(&[Reflect, DiffuseScatter])]),
            Condition::Ds
        );
        assert_eq!(classify(&[]), Condition::Outage);
        // one scattered + one reflected, no direct
        assert_eq!(
            classify(&[path(&[DiffuseScatter]), path(&[Reflect])]),
            Condition::Nlos
        );
    }

    #[test]
    fn interaction_strings() {
        assert_eq!(format_interactions(&[Reflect, Reflect, Diffract]), "R+R+D");
        assert_eq!(
            parse_interactions("R+R+D").unwrap(),
            vec![Reflect, Reflect, Diffract]
        );
        assert_eq!(parse_interactions("").unwrap(), vec![]);
        assert!(parse_interactions("R+X").is_err());
    }

    #[test]
    fn path_validation() {
        let mut p = path(&[Direct]);
        assert!(p.validate().is_ok());
        p.delay_ns = -1.0;
        assert!(p.validate().is_err());
        let mut p = path(&[Reflect]);
        p.aoa_az_deg = -180.0;
        assert!(p.validate().is_err());
        p.aoa_az_deg = 180.0;
        assert!(p.validate().is_ok());
        p.aod_el_deg = 90.5;
        assert!(p.validate().is_err());
        assert!(path(&[Direct, Reflect]).validate().is_err());
    }

    const GOOD: &str = "\
rx_id,rx_x_m,rx_y_m,rx_z_m,power_dbm,delay_ns,aod_az_deg,aod_el_deg,aoa_az_deg,aoa_el_deg,interactions
0,1,0,0,-41.4,3.336,0,0,180,0,L
0,1,0,0,-50,5,10,0,170,0,R
1,0,2,0,-INF,,,,,,
";

    #[test]
    fn read_two_records() {
        let recs = read_csv(GOOD.as_bytes(), [0.0; 3]).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].condition, Condition::Los);
        assert_eq!(recs[0].paths.len(), 2);
        assert_eq!(recs[1].condition, Condition::Outage);
        assert_eq!(recs[1].distance_3d_m, 2.0);
    }

    #[test]
    fn negative_delay_is_validation_error() {
        let text = GOOD.replace("3.336", "-1");
        match read_csv(text.as_bytes(), [0.0; 3]) {
            Err(DatasetError::Validation { rx_id: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_line() {
        let text = GOOD.replace("-50,5,10", "-50,abc,10");
        match read_csv(text.as_bytes(), [0.0; 3]) {
            Err(DatasetError::Parse { line: 3, msg }) => assert!(msg.contains("delay_ns")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn condition_column_is_ignored() {
        let text = "\
rx_id,rx_x_m,rx_y_m,rx_z_m,power_dbm,delay_ns,aod_az_deg,aod_el_deg,aoa_az_deg,aoa_el_deg,interactions,condition
4,1,0,0,-50,5,10,0,170,0,R,LOS
";
        let recs = read_csv(text.as_bytes(), [0.0; 3]).unwrap();
        assert_eq!(recs[0].condition, Condition::Nlos);
    }
}
