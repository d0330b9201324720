//! Dataset files, run outputs and the binary trigger cache.
//!
//! A dataset directory holds `rules.csv`, `triggers.csv`, `actionmap.json`
//! and optionally `fields.csv`. Loading reports every problem found rather
//! than stopping at the first.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::bits::BitColumn;
use crate::error::{Error, Result, Violation};
use crate::model::{Action, ActionMap, Dataset, Rule, RuleSet, TriggerMatrix};
use crate::optimize::TraceRecord;

pub const RULES: &str = "rules.csv";
pub const TRIGGERS: &str = "triggers.csv";
pub const FIELDS: &str = "fields.csv";
pub const ACTION_MAP: &str = "actionmap.json";
const CACHE_DIR: &str = ".cache";
const CACHE_MAGIC: &[u8; 8] = b"RPTRIG01";

const RULE_HEADER: [&str; 7] = ["id", "action", "priority", "mandatory", "frozen", "updates_fields", "checks_fields"];

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(';').map(str::trim).filter(|f| !f.is_empty()).map(str::to_string).collect()
}

pub fn parse_action_map(text: &str) -> Result<ActionMap> {
    let raw: BTreeMap<String, Action> =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{ACTION_MAP}: {e}")))?;
    let mut pairs = Vec::with_capacity(raw.len());
    for (k, a) in raw {
        let p: u32 = k
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{ACTION_MAP}: priority {k:?} is not a non-negative integer")))?;
        pairs.push((p, a));
    }
    Ok(ActionMap::from_pairs(pairs))
}

pub fn action_map_json(amap: &ActionMap) -> String {
    let m: BTreeMap<u32, Action> = amap.entries().clone();
    serde_json::to_string_pretty(&m).expect("action map serializes") + "\n"
}

/// Parses `rules.csv`; malformed records are collected in `bad`.
pub fn parse_rules(path: &Path, text: &str, bad: &mut Vec<Violation>) -> Result<Vec<Rule>> {
    let mut rdr = csv_reader(text);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().map(String::as_str).ne(RULE_HEADER) {
        bad.push(Violation::BadRuleRecord {
            line: 1,
            reason: format!("expected header {}", RULE_HEADER.join(",")),
        });
        return Ok(Vec::new());
    }
    let mut rules = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != RULE_HEADER.len() {
            bad.push(Violation::BadRuleRecord {
                line,
                reason: format!("{} fields, expected {}", rec.len(), RULE_HEADER.len()),
            });
            continue;
        }
        let mut reason = Vec::new();
        let action = rec[1].parse::<Action>().map_err(|e| reason.push(e)).ok();
        let priority = rec[2]
            .trim()
            .parse::<u32>()
            .map_err(|_| reason.push(format!("priority {:?} is not a non-negative integer", &rec[2])))
            .ok();
        let mandatory = parse_bool(&rec[3]).ok_or_else(|| reason.push(format!("mandatory {:?} is not a boolean", &rec[3])));
        let frozen = parse_bool(&rec[4]).ok_or_else(|| reason.push(format!("frozen {:?} is not a boolean", &rec[4])));
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            reason.push("empty id".into());
        }
        match (action, priority, mandatory, frozen) {
            (Some(action), Some(priority), Ok(mandatory), Ok(frozen)) if reason.is_empty() => {
                rules.push(Rule {
                    id,
                    action,
                    priority,
                    mandatory,
                    frozen,
                    updates_fields: split_list(&rec[5]),
                    checks_fields: split_list(&rec[6]),
                });
            }
            _ => bad.push(Violation::BadRuleRecord {
                line,
                reason: reason.join(", "),
            }),
        }
    }
    Ok(rules)
}

pub fn rules_csv(rules: &RuleSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RULE_HEADER).expect("in-memory write");
    for r in rules.rules() {
        w.write_record([
            r.id.as_str(),
            r.action.as_str(),
            &r.priority.to_string(),
            if r.mandatory { "true" } else { "false" },
            if r.frozen { "true" } else { "false" },
            &r.updates_fields.join(";"),
            &r.checks_fields.join(";"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Parses `triggers.csv` against the declared rules. Columns may come in any
/// order; the result follows rule order.
pub fn parse_triggers(path: &Path, text: &str, rules: &[Rule], bad: &mut Vec<Violation>) -> Result<Option<TriggerMatrix>> {
    let mut rdr = csv_reader(text);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let before = bad.len();
    if header.len() < 2 || header[0] != "timestamp_ms" || header[1] != "label" {
        bad.push(Violation::UnknownTriggerColumn {
            column: format!("header must start with timestamp_ms,label; found {:?}", header.iter().take(2).collect::<Vec<_>>()),
        });
        return Ok(None);
    }
    let by_id: HashMap<&str, usize> = rules.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut slot = vec![None; header.len()];
    let mut seen = vec![false; rules.len()];
    for (c, h) in header.iter().enumerate().skip(2) {
        match by_id.get(h.as_str()) {
            Some(&j) if !seen[j] => {
                seen[j] = true;
                slot[c] = Some(j);
            }
            Some(_) => bad.push(Violation::DuplicateRuleId { rule: h.clone() }),
            None => bad.push(Violation::UnknownTriggerColumn { column: h.clone() }),
        }
    }
    for (j, r) in rules.iter().enumerate() {
        if !seen[j] {
            bad.push(Violation::MissingTriggerColumn { rule: r.id.clone() });
        }
    }

    let mut timestamps = Vec::new();
    let mut labels = Vec::new();
    let mut firings: Vec<Vec<usize>> = vec![Vec::new(); rules.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != header.len() {
            bad.push(Violation::RaggedRow {
                file: TRIGGERS,
                row,
                expected: header.len(),
                found: rec.len(),
            });
            timestamps.push(0);
            labels.push(false);
            continue;
        }
        match rec[0].trim().parse::<i64>() {
            Ok(t) => timestamps.push(t),
            Err(_) => {
                bad.push(Violation::BadTimestamp {
                    row,
                    value: rec[0].to_string(),
                });
                timestamps.push(0);
            }
        }
        match rec[1].trim() {
            "0" => labels.push(false),
            "1" => labels.push(true),
            v => {
                bad.push(Violation::NonBinaryLabel {
                    row,
                    value: v.to_string(),
                });
                labels.push(false);
            }
        }
        for (c, cell) in rec.iter().enumerate().skip(2) {
            match cell.trim() {
                "0" => {}
                "1" => {
                    if let Some(j) = slot[c] {
                        firings[j].push(row);
                    }
                }
                v => bad.push(Violation::NonBinaryCell {
                    row,
                    column: header[c].clone(),
                    value: v.to_string(),
                }),
            }
        }
    }
    if bad.len() > before {
        return Ok(None);
    }
    let n = timestamps.len();
    let columns = firings.into_iter().map(|f| BitColumn::from_indices(n, f)).collect();
    TriggerMatrix::new(columns, timestamps, BitColumn::from_bools(labels), Vec::new()).map(Some)
}

pub fn triggers_csv(rules: &RuleSet, t: &TriggerMatrix) -> String {
    let mut out = String::with_capacity(t.rows() * (t.cols() * 2 + 16));
    out.push_str("timestamp_ms,label");
    for id in rules.ids() {
        out.push(',');
        out.push_str(&csv_field(id));
    }
    out.push('\n');
    for row in 0..t.rows() {
        out.push_str(&t.timestamps()[row].to_string());
        out.push_str(if t.label(row) { ",1" } else { ",0" });
        for j in 0..t.cols() {
            out.push_str(if t.fired(row, j) { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parses `fields.csv`: one line per transaction, aligned with
/// `triggers.csv`, holding the timestamp and then `field=value` cells.
pub fn parse_fields(path: &Path, text: &str, timestamps: &[i64], bad: &mut Vec<Violation>) -> Result<Vec<Vec<(String, String)>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut out = Vec::with_capacity(timestamps.len());
    let mut records = rdr.records();
    let first = records.next().transpose().map_err(|e| csv_error(path, e))?;
    // an optional header line names only the timestamp column
    let first = first.filter(|r| r.get(0).map(str::trim) != Some("timestamp_ms"));
    for (row, rec) in first.into_iter().map(Ok).chain(records).enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let ts = rec.get(0).unwrap_or("").trim();
        match ts.parse::<i64>() {
            Ok(t) if timestamps.get(row) == Some(&t) => {}
            _ => bad.push(Violation::BadTimestamp {
                row,
                value: format!("{ts} (fields.csv, expected {:?})", timestamps.get(row)),
            }),
        }
        let mut pairs = Vec::new();
        for cell in rec.iter().skip(1) {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            match cell.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => pairs.push((k.trim().to_string(), v.trim().to_string())),
                _ => bad.push(Violation::BadField {
                    row,
                    value: cell.to_string(),
                }),
            }
        }
        out.push(pairs);
    }
    if out.len() != timestamps.len() {
        bad.push(Violation::RowCountMismatch {
            what: "fields.csv",
            expected: timestamps.len(),
            found: out.len(),
        });
    }
    Ok(out)
}

pub fn fields_csv(t: &TriggerMatrix) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(["timestamp_ms"]).expect("in-memory write");
    for row in 0..t.rows() {
        let mut rec = vec![t.timestamps()[row].to_string()];
        rec.extend(t.fields(row).iter().map(|(k, v)| format!("{k}={v}")));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    load(dir, false)
}

/// Like [`load_dataset`], reusing (or creating) a binary copy of the trigger
/// matrix under `dir/.cache`, keyed by the content hash of the text files.
pub fn load_dataset_cached(dir: &Path) -> Result<Dataset> {
    load(dir, true)
}

fn load(dir: &Path, cached: bool) -> Result<Dataset> {
    let rules_path = dir.join(RULES);
    let trig_path = dir.join(TRIGGERS);
    let amap_path = dir.join(ACTION_MAP);
    let rules_text = read_text(&rules_path)?;
    let amap = parse_action_map(&read_text(&amap_path)?)?;
    let mut bad = Vec::new();
    let rules = parse_rules(&rules_path, &rules_text, &mut bad)?;

    let trig_bytes = fs::read(&trig_path).map_err(|e| Error::io(&trig_path, e))?;
    let key = cache_key(rules_text.as_bytes(), &trig_bytes);
    let cache_file = dir.join(CACHE_DIR).join(format!("{key}.bin"));
    let from_cache = if cached && bad.is_empty() {
        fs::read(&cache_file).ok().and_then(|b| decode_matrix(&b))
    } else {
        None
    };
    let mut triggers = match from_cache {
        Some(t) => Some(t),
        None => {
            let text = String::from_utf8(trig_bytes).map_err(|e| {
                Error::io(&trig_path, std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            })?;
            let t = parse_triggers(&trig_path, &text, &rules, &mut bad)?;
            if cached {
                if let Some(t) = &t {
                    // the cache is a convenience; failing to write it is not an error
                    let _ = fs::create_dir_all(dir.join(CACHE_DIR)).and_then(|_| fs::write(&cache_file, encode_matrix(t)));
                }
            }
            t
        }
    };

    let fields_path = dir.join(FIELDS);
    if fields_path.exists() {
        if let Some(t) = triggers.take() {
            let fields = parse_fields(&fields_path, &read_text(&fields_path)?, t.timestamps(), &mut bad)?;
            triggers = if bad.is_empty() { Some(t.with_fields(fields)?) } else { Some(t) };
        }
    }
    let Some(triggers) = triggers.filter(|_| bad.is_empty()) else {
        return Err(Error::violations(bad));
    };
    match Dataset::validate(RuleSet::new(rules), amap, triggers) {
        Ok(d) => Ok(d),
        Err(Error::Validation(v)) => {
            bad.extend(v.0);
            Err(Error::violations(bad))
        }
        Err(e) => Err(e),
    }
}

/// Writes the dataset files in canonical form (rule order = file order).
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join(RULES), rules_csv(&data.rules).as_bytes())?;
    write_file(&dir.join(TRIGGERS), triggers_csv(&data.rules, &data.triggers).as_bytes())?;
    write_file(&dir.join(ACTION_MAP), action_map_json(&data.action_map).as_bytes())?;
    if data.triggers.has_field_data() {
        write_file(&dir.join(FIELDS), fields_csv(&data.triggers).as_bytes())?;
    }
    Ok(())
}

fn cache_key(rules: &[u8], triggers: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update((rules.len() as u64).to_le_bytes());
    h.update(rules);
    h.update(triggers);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn encode_matrix(t: &TriggerMatrix) -> Vec<u8> {
    let words = t.rows().div_ceil(64);
    let mut out = Vec::with_capacity(24 + 8 * (t.rows() + words * (t.cols() + 1)));
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
    for ts in t.timestamps() {
        out.extend_from_slice(&ts.to_le_bytes());
    }
    for col in std::iter::once(t.labels()).chain(t.columns()) {
        for w in col.words() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

fn decode_matrix(b: &[u8]) -> Option<TriggerMatrix> {
    let mut chunks = b.get(CACHE_MAGIC.len()..)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap()));
    if &b[..CACHE_MAGIC.len()] != CACHE_MAGIC {
        return None;
    }
    let rows = chunks.next()? as usize;
    let cols = chunks.next()? as usize;
    let words = rows.div_ceil(64);
    if b.len() != CACHE_MAGIC.len() + 16 + 8 * (rows + words * (cols + 1)) {
        return None;
    }
    let timestamps: Vec<i64> = chunks.by_ref().take(rows).map(|w| w as i64).collect();
    let mut read_col = || {
        let mut ws: Vec<u64> = chunks.by_ref().take(words).collect();
        if let Some(last) = ws.last_mut() {
            *last &= BitColumn::tail_mask(rows);
        }
        BitColumn::from_words(ws, rows)
    };
    let labels = read_col();
    let columns = (0..cols).map(|_| read_col()).collect();
    TriggerMatrix::new(columns, timestamps, labels, Vec::new()).ok()
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from("eval_index,candidate_loss,best_loss\n");
    for r in trace {
        out.push_str(&format!("{},{},{}\n", r.eval_index, r.candidate_loss, r.best_loss));
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, to_json(value).as_bytes())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_with, SynthConfig};

    fn fixture() -> Dataset {
        let amap = ActionMap::from_pairs([(1, Action::Accept), (2, Action::Alert), (3, Action::Decline)]);
        let rules = RuleSet::new(vec![
            Rule::new("U", Action::Alert, 2).updates("card"),
            Rule::new("C,1", Action::Decline, 3).checks("card").mandatory(),
            Rule::new("A", Action::Accept, 1).frozen(),
        ]);
        let t = TriggerMatrix::from_rows(
            &[vec![true, false, true], vec![false, true, false]],
            vec![10, 20],
            &[true, false],
        )
        .unwrap()
        .with_fields(vec![
            vec![("card".into(), "x".into())],
            vec![("card".into(), "x".into()), ("email".into(), "a=b".into())],
        ])
        .unwrap();
        Dataset::validate(rules, amap, t).unwrap()
    }

    #[test]
    fn round_trip_is_byte_stable() {
        for data in [fixture(), generate_with(&SynthConfig::small(500), 3).dataset] {
            let dir = tempfile::tempdir().unwrap();
            write_dataset(dir.path(), &data).unwrap();
            let back = load_dataset(dir.path()).unwrap();
            assert_eq!(back, data);
            let again = tempfile::tempdir().unwrap();
            write_dataset(again.path(), &back).unwrap();
            for f in [RULES, TRIGGERS, ACTION_MAP] {
                assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap());
            }
        }
    }

    #[test]
    fn cache_gives_the_same_dataset() {
        let data = fixture();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data).unwrap();
        let first = load_dataset_cached(dir.path()).unwrap();
        assert!(fs::read_dir(dir.path().join(CACHE_DIR)).unwrap().count() == 1);
        let second = load_dataset_cached(dir.path()).unwrap();
        assert_eq!(first, data);
        assert_eq!(second, data);
        // field data lives in fields.csv, not in the cache
        let mut bytes = encode_matrix(&data.triggers);
        let decoded = decode_matrix(&bytes).unwrap().with_fields(data.triggers.fields_by_row()).unwrap();
        assert_eq!(decoded, data.triggers);
        bytes.pop();
        assert!(decode_matrix(&bytes).is_none());
    }

    fn errors_for(rules: &str, triggers: &str) -> String {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(RULES), rules).unwrap();
        fs::write(dir.path().join(TRIGGERS), triggers).unwrap();
        fs::write(dir.path().join(ACTION_MAP), r#"{"1":"accept","2":"alert"}"#).unwrap();
        let e = load_dataset(dir.path()).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        e.to_string()
    }

    const RULES_OK: &str = "id,action,priority,mandatory,frozen,updates_fields,checks_fields\nA,accept,1,false,false,,\nB,alert,2,false,false,,\n";

    #[test]
    fn missing_column_names_the_rule() {
        let msg = errors_for(RULES_OK, "timestamp_ms,label,A\n0,0,1\n");
        assert!(msg.contains("no trigger column for rule B"), "{msg}");
    }

    #[test]
    fn every_violation_is_reported() {
        let msg = errors_for(RULES_OK, "timestamp_ms,label,A,B\n0,2,1,0\nx,0,7,1\n");
        assert!(msg.contains("non-binary label"), "{msg}");
        assert!(msg.contains("unparseable timestamp"), "{msg}");
        assert!(msg.contains("non-binary trigger cell \"7\""), "{msg}");
    }

    #[test]
    fn bad_rule_rows_and_mapping_problems() {
        let rules = "id,action,priority,mandatory,frozen,updates_fields,checks_fields\nA,accept,2,false,false,,\nB,maybe,2,false,false,,\n";
        let msg = errors_for(rules, "timestamp_ms,label,A\n0,0,1\n");
        assert!(msg.contains("unknown action"), "{msg}");
        let msg = errors_for(
            "id,action,priority,mandatory,frozen,updates_fields,checks_fields\nA,accept,2,false,false,,\n",
            "timestamp_ms,label,A\n0,0,1\n",
        );
        assert!(msg.contains("maps to alert"), "{msg}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn trace_format() {
        let t = [TraceRecord {
            eval_index: 0,
            candidate_loss: 0.5,
            best_loss: 0.25,
        }];
        assert_eq!(trace_csv(&t), "eval_index,candidate_loss,best_loss\n0,0.5,0.25\n");
    }
}
