//! CSV datasets and JSON files.
//!
//! A dataset CSV has one row per patient. Columns are `patient_id`, one
//! `label_<task>` per label channel, `s_<name>` per static variable and
//! `t_<name>_d<day>` per temporal variable and day. Empty cells are missing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use mimic_core::data::{Dataset, Task, TemporalTensor};
use mimic_core::linalg::Matrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

enum Column {
    Id,
    Label(Task),
    Static(usize),
    Temporal { var: usize, day: usize },
}

fn parse_header(header: &csv::StringRecord) -> CliResult<(Vec<Column>, Vec<String>, Vec<String>, usize)> {
    let mut static_names = Vec::new();
    let mut temporal_names: Vec<String> = Vec::new();
    let mut days: Vec<Vec<usize>> = Vec::new();
    let mut columns = Vec::with_capacity(header.len());
    let mut has_id = false;
    let mut seen = std::collections::BTreeSet::new();
    for name in header {
        if !seen.insert(name) {
            return Err(CliError::validation(name, "duplicate column"));
        }
        let col = if name == "patient_id" {
            has_id = true;
            Column::Id
        } else if let Some(task) = name.strip_prefix("label_") {
            Column::Label(task.parse().map_err(|_| CliError::validation(name, "unknown label channel"))?)
        } else if let Some(s) = name.strip_prefix("s_") {
            static_names.push(s.to_string());
            Column::Static(static_names.len() - 1)
        } else if let Some((var, day)) = name.strip_prefix("t_").and_then(|t| t.rsplit_once("_d")) {
            let day: usize = day
                .parse()
                .map_err(|_| CliError::validation(name, "temporal columns end in `_d<day>`"))?;
            let var = match temporal_names.iter().position(|n| n == var) {
                Some(v) => v,
                None => {
                    temporal_names.push(var.to_string());
                    days.push(Vec::new());
                    temporal_names.len() - 1
                }
            };
            days[var].push(day);
            Column::Temporal { var, day }
        } else {
            return Err(CliError::validation(name, "unrecognised column"));
        };
        columns.push(col);
    }
    if !has_id {
        return Err(CliError::validation("patient_id", "missing column"));
    }
    let t_steps = days.first().map_or(0, Vec::len);
    for (name, d) in temporal_names.iter().zip(&mut days) {
        d.sort_unstable();
        if d.len() != t_steps || d.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(CliError::validation(
                format!("t_{name}"),
                format!("every temporal variable needs days 0..{t_steps}"),
            ));
        }
    }
    Ok((columns, static_names, temporal_names, t_steps))
}

fn parse_value(cell: &str, column: &str, row: usize) -> CliResult<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse()
        .map_err(|_| CliError::validation(column, format!("row {row}: cannot parse `{cell}` as a number")))
}

/// Reads a dataset CSV. Columns may come in any order.
pub fn read_dataset<R: Read>(reader: R) -> CliResult<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CliError::validation("header", e.to_string()))?
        .clone();
    let (columns, static_names, temporal_names, t_steps) = parse_header(&header)?;
    let (q, p) = (static_names.len(), temporal_names.len());
    let mut ids = Vec::new();
    let mut statics = Vec::new();
    let mut temporal = Vec::new();
    let mut labels: BTreeMap<Task, Vec<u8>> = columns
        .iter()
        .filter_map(|c| match c {
            Column::Label(t) => Some((*t, Vec::new())),
            _ => None,
        })
        .collect();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::validation(format!("row {row}"), e.to_string()))?;
        let base_s = statics.len();
        let base_t = temporal.len();
        statics.resize(base_s + q, f64::NAN);
        temporal.resize(base_t + t_steps * p, f64::NAN);
        for ((col, cell), name) in columns.iter().zip(rec.iter()).zip(header.iter()) {
            match *col {
                Column::Id => ids.push(cell.to_string()),
                Column::Label(task) => {
                    let y = match cell.trim() {
                        "0" => 0,
                        "1" => 1,
                        other => return Err(CliError::validation(name, format!("row {row}: label `{other}` is not 0 or 1"))),
                    };
                    labels.get_mut(&task).expect("channel from header").push(y);
                }
                Column::Static(j) => statics[base_s + j] = parse_value(cell, name, row)?,
                Column::Temporal { var, day } => temporal[base_t + day * p + var] = parse_value(cell, name, row)?,
            }
        }
    }
    let n = ids.len();
    let static_values = Matrix::from_vec(n, q, statics)?;
    let mut tensor = TemporalTensor::zeros(n, t_steps, p);
    tensor.values = temporal;
    Ok(Dataset::from_parts(ids, static_names, temporal_names, static_values, tensor, labels)?)
}

/// Writes `ds` as CSV: id, labels, static columns, then temporal columns
/// variable by variable. Missing cells are left empty.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["patient_id".to_string()];
    header.extend(ds.labels.keys().map(|t| format!("label_{}", t.as_str().to_ascii_lowercase())));
    header.extend(ds.static_names.iter().map(|s| format!("s_{s}")));
    for name in &ds.temporal_names {
        header.extend((0..ds.t_steps()).map(|d| format!("t_{name}_d{d}")));
    }
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing CSV: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    let fmt = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
    for i in 0..ds.n_samples() {
        let mut rec = vec![ds.patient_ids[i].clone()];
        rec.extend(ds.labels.values().map(|y| y[i].to_string()));
        rec.extend(ds.static_values.row(i).iter().map(|&v| fmt(v)));
        for k in 0..ds.p_temporal() {
            rec.extend((0..ds.t_steps()).map(|d| fmt(ds.temporal.get(i, d, k))));
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Runtime(format!("writing CSV: {e}")))
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset(BufReader::new(file))
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> CliResult<()> {
    let file = create(path)?;
    write_dataset(ds, BufWriter::new(file))
}

fn create(path: &Path) -> CliResult<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(format!("encoding JSON: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &to_json(value)?)
}

/// Parses JSON, naming the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> CliResult<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        CliError::validation(if field == "." { "config".to_string() } else { field }, e.into_inner().to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimic_core::data::{synth_generate, SynthConfig};

    fn csv_of(ds: &Dataset) -> String {
        let mut buf = Vec::new();
        write_dataset(ds, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_keeps_values_and_missing_cells() {
        let ds = synth_generate(&SynthConfig { n_samples: 25, ..SynthConfig::default() }).unwrap();
        let text = csv_of(&ds);
        let back = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(csv_of(&back), text);
        assert_eq!(back.static_missing, ds.static_missing);
        assert_eq!(back.temporal_missing, ds.temporal_missing);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.static_kinds, ds.static_kinds);
    }

    #[test]
    fn header_layout() {
        let ds = synth_generate(&SynthConfig { n_samples: 3, ..SynthConfig::default() }).unwrap();
        let text = csv_of(&ds);
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(&header[..3], ["patient_id", "label_mor", "label_vfd"]);
        assert_eq!(header.len(), 3 + 27 + 21 * 4);
        assert_eq!(header[30..34], ["t_V1_d0", "t_V1_d1", "t_V1_d2", "t_V1_d3"]);
    }

    #[test]
    fn columns_may_be_shuffled() {
        let text = "t_a_d1,label_mor,s_x,patient_id,t_a_d0\n5,1,0.5,p1,4\n6,0,,p2,3\n";
        let ds = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(ds.temporal.values, [4.0, 5.0, 3.0, 6.0]);
        assert!(ds.static_missing[1]);
        assert_eq!(ds.label(Task::Mor).unwrap(), [1, 0]);
    }

    #[test]
    fn errors_name_the_column() {
        let bad = |text: &str, field: &str| match read_dataset(text.as_bytes()) {
            Err(CliError::Validation { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{other:?}"),
        };
        bad("patient_id,s_a\np,x\n", "s_a");
        bad("patient_id,label_mor\np,2\n", "label_mor");
        bad("patient_id,label_xyz\n", "label_xyz");
        bad("patient_id,t_a_d0,t_a_d2\n", "t_a");
        bad("s_a\n1\n", "patient_id");
        bad("patient_id,weird\n", "weird");
        bad("patient_id,s_a,s_a\n", "s_a");
    }

    #[test]
    fn json_errors_carry_the_field_path() {
        #[derive(Debug, serde::Deserialize)]
        #[allow(dead_code)]
        struct Outer {
            inner: Inner,
        }
        #[derive(Debug, serde::Deserialize)]
        #[allow(dead_code)]
        struct Inner {
            epochs: usize,
        }
        match parse_json::<Outer>(r#"{"inner": {"epochs": "many"}}"#) {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "inner.epochs"),
            other => panic!("{other:?}"),
        }
    }
}
