//! CSV and JSON file formats.
//!
//! All files are UTF-8 with LF line endings and fixed column order. Floats
//! are written in Rust's shortest round-trip form, so equal values always
//! produce equal bytes.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EstimateReport, SampleRecord, SurveyedSample};
use crate::metrics::WaveStats;
use crate::network::{Gender, Individual, NodeId, SocialGraph};
use crate::recruitment::{Method, RecruitEvent, RecruitmentForest};

pub const NODES_HEADER: [&str; 4] = ["id", "age", "gender", "degree"];
pub const EDGES_HEADER: [&str; 2] = ["src", "dst"];
pub const SEEDS_HEADER: [&str; 1] = ["id"];
pub const FOREST_HEADER: [&str; 3] = ["wave", "recruiter_id", "recruit_id"];
pub const WAVE_STATS_HEADER: [&str; 5] = ["wave", "new_unique", "cumulative_n", "mean_age", "prop_female"];
pub const PLOT_HEADER: [&str; 4] = ["wave", "method", "metric", "value"];
pub const REPLICATES_HEADER: [&str; 3] = ["replicate", "estimate", "weight"];

/// Renders rows as CSV bytes.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

pub fn nodes_csv(graph: &SocialGraph) -> Vec<u8> {
    csv_bytes(
        &NODES_HEADER,
        graph.individuals().iter().map(|p| {
            [
                p.id.to_string(),
                p.age.to_string(),
                p.gender.to_string(),
                graph.degree(p.id).to_string(),
            ]
        }),
    )
}

pub fn edges_csv(graph: &SocialGraph) -> Vec<u8> {
    csv_bytes(&EDGES_HEADER, graph.edges().map(|(a, b)| [a.to_string(), b.to_string()]))
}

pub fn seeds_csv(seeds: &[NodeId]) -> Vec<u8> {
    csv_bytes(&SEEDS_HEADER, seeds.iter().map(|s| [s.to_string()]))
}

pub fn forest_csv(forest: &RecruitmentForest) -> Vec<u8> {
    csv_bytes(
        &FOREST_HEADER,
        forest
            .events
            .iter()
            .map(|e| [e.wave.to_string(), e.recruiter.to_string(), e.recruit.to_string()]),
    )
}

pub fn sample_csv(sample: &SurveyedSample) -> Vec<u8> {
    let mut header = vec!["id", "degree"];
    header.extend(sample.attributes().iter().map(String::as_str));
    csv_bytes(
        &header,
        sample.records().iter().map(|r| {
            let mut row = vec![r.id.to_string(), r.degree.to_string()];
            row.extend(r.values.iter().map(f64::to_string));
            row
        }),
    )
}

pub fn wave_stats_csv(stats: &[WaveStats]) -> Vec<u8> {
    csv_bytes(
        &WAVE_STATS_HEADER,
        stats.iter().map(|s| {
            [
                s.wave.to_string(),
                s.new_unique.to_string(),
                s.cumulative_n.to_string(),
                s.mean_age.to_string(),
                s.prop_female.to_string(),
            ]
        }),
    )
}

pub fn replicates_csv(report: &EstimateReport) -> Vec<u8> {
    csv_bytes(
        &REPLICATES_HEADER,
        report
            .replicates
            .iter()
            .zip(&report.weights)
            .enumerate()
            .map(|(b, (v, w))| [b.to_string(), v.to_string(), w.to_string()]),
    )
}

/// Estimates of one recruitment arm, as written to `estimates_<arm>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatesFile {
    pub recruitment: Method,
    pub estimates: Vec<EstimateReport>,
}

// --- reading -------------------------------------------------------------

struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn parse_err(&self, line: u64, column: u64, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            column,
            message: message.into(),
        }
    }

    fn field<T: FromStr>(&self, line: u64, record: &csv::StringRecord, col: usize) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = record
            .get(col)
            .ok_or_else(|| self.parse_err(line, col as u64 + 1, "missing field"))?;
        raw.parse::<T>().map_err(|e| {
            self.parse_err(
                line,
                col as u64 + 1,
                format!("column `{}`: cannot parse `{raw}`: {e}", self.header[col]),
            )
        })
    }
}

fn read_table(path: &Path, expected: Option<&[&str]>) -> Result<Table> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_slice());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line());
        Error::Parse {
            path: display.clone(),
            line,
            column: 0,
            message: e.to_string(),
        }
    };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if let Some(expected) = expected {
        if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
            let column = header
                .iter()
                .zip(expected.iter())
                .position(|(h, e)| h != e)
                .unwrap_or(header.len().min(expected.len()));
            return Err(Error::Parse {
                path: display,
                line: 1,
                column: column as u64 + 1,
                message: format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
            });
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Table {
        path: display,
        header,
        rows,
    })
}

/// Reads `nodes.csv`; individuals are returned sorted by id.
pub fn read_nodes(path: &Path) -> Result<Vec<Individual>> {
    let t = read_table(path, Some(&NODES_HEADER))?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let gender_raw: String = t.field(*line, rec, 2)?;
        let gender = Gender::from_str(&gender_raw).map_err(|e| t.parse_err(*line, 3, e))?;
        out.push(Individual {
            id: t.field(*line, rec, 0)?,
            age: t.field(*line, rec, 1)?,
            gender,
        });
    }
    out.sort_by_key(|p| p.id);
    Ok(out)
}

pub fn read_edges(path: &Path) -> Result<Vec<(NodeId, NodeId)>> {
    let t = read_table(path, Some(&EDGES_HEADER))?;
    t.rows
        .iter()
        .map(|(line, rec)| Ok((t.field(*line, rec, 0)?, t.field(*line, rec, 1)?)))
        .collect()
}

pub fn read_graph(nodes: &Path, edges: &Path) -> Result<SocialGraph> {
    SocialGraph::new(read_nodes(nodes)?, &read_edges(edges)?)
}

pub fn read_seeds(path: &Path) -> Result<Vec<NodeId>> {
    let t = read_table(path, Some(&SEEDS_HEADER))?;
    t.rows.iter().map(|(line, rec)| t.field(*line, rec, 0)).collect()
}

pub fn read_forest(path: &Path, seeds: Vec<NodeId>, method: Method) -> Result<RecruitmentForest> {
    let t = read_table(path, Some(&FOREST_HEADER))?;
    let events = t
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok(RecruitEvent {
                wave: t.field(*line, rec, 0)?,
                recruiter: t.field(*line, rec, 1)?,
                recruit: t.field(*line, rec, 2)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let forest = RecruitmentForest { method, seeds, events };
    forest.validate()?;
    Ok(forest)
}

/// Reads `id,degree,<attribute>...`.
pub fn read_sample(path: &Path) -> Result<SurveyedSample> {
    let t = read_table(path, None)?;
    if t.header.len() < 2 || t.header[0] != "id" || t.header[1] != "degree" {
        return Err(t.parse_err(1, 1, format!("expected header `id,degree,...`, found `{}`", t.header.join(","))));
    }
    let attributes: Vec<String> = t.header[2..].to_vec();
    let records = t
        .rows
        .iter()
        .map(|(line, rec)| {
            if rec.len() != t.header.len() {
                return Err(t.parse_err(*line, rec.len() as u64 + 1, "wrong number of fields"));
            }
            Ok(SampleRecord {
                id: t.field(*line, rec, 0)?,
                degree: t.field(*line, rec, 1)?,
                values: (2..t.header.len())
                    .map(|c| t.field(*line, rec, c))
                    .collect::<Result<Vec<f64>>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SurveyedSample::new(attributes, records)
}

pub fn read_wave_stats(path: &Path) -> Result<Vec<WaveStats>> {
    let t = read_table(path, Some(&WAVE_STATS_HEADER))?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok(WaveStats {
                wave: t.field(*line, rec, 0)?,
                new_unique: t.field(*line, rec, 1)?,
                cumulative_n: t.field(*line, rec, 2)?,
                mean_age: t.field(*line, rec, 3)?,
                prop_female: t.field(*line, rec, 4)?,
            })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        column: e.column() as u64,
        message: e.to_string(),
    })
}
