use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use scr_core::{fixtures, parse_tree, RiskTree};

use crate::Failure;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a tree document. A path that does not exist but names a bundled
/// fixture (`toy_3x2`, `nonlife_case`) loads the fixture.
pub fn load_tree(path: &Path) -> Result<RiskTree, Failure> {
    let text = match (path.exists(), path.to_str().and_then(fixtures::by_name)) {
        (false, Some(bundled)) => bundled.to_string(),
        _ => read(path)?,
    };
    parse_tree(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn records(path: &Path) -> Result<Vec<(usize, csv::StringRecord)>, Failure> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        out.push((line + 1, record));
    }
    Ok(out)
}

fn number(path: &Path, line: usize, field: &str) -> Result<f64, Failure> {
    field
        .parse::<f64>()
        .map_err(|_| Failure::Validation(format!("{}:{line}: `{field}` is not a number", path.display())))
}

/// A first row whose numeric columns do not parse is taken as a header.
fn is_header(record: &csv::StringRecord, numeric_from: usize) -> bool {
    record
        .iter()
        .skip(numeric_from)
        .any(|f| f.parse::<f64>().is_err())
}

/// `node_id,value` rows.
pub fn load_node_values(path: &Path) -> Result<BTreeMap<String, f64>, Failure> {
    let mut map = BTreeMap::new();
    for (k, (line, record)) in records(path)?.into_iter().enumerate() {
        if k == 0 && is_header(&record, 1) {
            continue;
        }
        if record.len() != 2 {
            return Err(Failure::Validation(format!(
                "{}:{line}: expected `node_id,value`",
                path.display()
            )));
        }
        map.insert(record[0].to_string(), number(path, line, &record[1])?);
    }
    Ok(map)
}

/// `var_x,var_y,var_xy` rows.
pub fn load_vars(path: &Path) -> Result<Vec<[f64; 3]>, Failure> {
    let mut rows = Vec::new();
    for (k, (line, record)) in records(path)?.into_iter().enumerate() {
        if k == 0 && is_header(&record, 0) {
            continue;
        }
        if record.len() != 3 {
            return Err(Failure::Validation(format!(
                "{}:{line}: expected `var_x,var_y,var_xy`",
                path.display()
            )));
        }
        rows.push([
            number(path, line, &record[0])?,
            number(path, line, &record[1])?,
            number(path, line, &record[2])?,
        ]);
    }
    Ok(rows)
}
