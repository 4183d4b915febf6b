//! CSV ingestion and export.
//!
//! Subjects file: `subject_id,censor_time,<baseline columns...>`.
//! Visits file: `subject_id,time,kind,<visit covariate columns...>` with
//! `kind` one of `event` / `nonevent`. An empty visit covariate cell marks
//! a value that was not recorded at that visit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Cohort, CovariateRegistry, CovariateVector, Subject, Visit, VisitKind};
use crate::error::{Error, Result};

const SUBJECT_KEYS: [&str; 2] = ["subject_id", "censor_time"];
const VISIT_KEYS: [&str; 3] = ["subject_id", "time", "kind"];

fn parse_error(source_name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: message.into(),
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header(source_name: &str, header: &csv::StringRecord, keys: &[&str]) -> Result<Vec<String>> {
    for (i, key) in keys.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == *key => {}
            other => {
                return Err(parse_error(
                    source_name,
                    1,
                    format!("column {} must be `{key}`, found {:?}", i + 1, other.unwrap_or("")),
                ))
            }
        }
    }
    Ok(header.iter().skip(keys.len()).map(str::to_string).collect())
}

fn parse_number(source_name: &str, line: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_error(source_name, line, format!("`{column}`: cannot parse `{cell}` as a number")))?;
    if !v.is_finite() {
        return Err(parse_error(source_name, line, format!("`{column}`: value `{cell}` is not finite")));
    }
    Ok(v)
}

/// Reads a cohort from the two CSV sources.
pub fn load_cohort<S: Read, V: Read>(subjects: S, visits: V, tau: Option<f64>) -> Result<Cohort> {
    load_named(("subjects", subjects), ("visits", visits), tau)
}

pub fn load_cohort_files(
    subjects_path: impl AsRef<Path>,
    visits_path: impl AsRef<Path>,
    tau: Option<f64>,
) -> Result<Cohort> {
    let s = subjects_path.as_ref();
    let v = visits_path.as_ref();
    load_named(
        (&s.display().to_string(), File::open(s)?),
        (&v.display().to_string(), File::open(v)?),
        tau,
    )
}

fn load_named<S: Read, V: Read>(
    (subjects_name, subjects): (&str, S),
    (visits_name, visits): (&str, V),
    tau: Option<f64>,
) -> Result<Cohort> {
    let mut rdr = reader(subjects);
    let baseline_names = check_header(subjects_name, rdr.headers()?, &SUBJECT_KEYS)?;
    let width = SUBJECT_KEYS.len() + baseline_names.len();

    let mut subjects: Vec<Subject> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(parse_error(
                subjects_name,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_error(subjects_name, line, "empty subject_id"));
        }
        let censor_time = parse_number(subjects_name, line, "censor_time", &record[1])?;
        if censor_time <= 0.0 {
            return Err(parse_error(subjects_name, line, "censor_time must be positive"));
        }
        let baseline = baseline_names
            .iter()
            .enumerate()
            .map(|(j, name)| parse_number(subjects_name, line, name, &record[SUBJECT_KEYS.len() + j]))
            .collect::<Result<Vec<f64>>>()?;
        if index.insert(id.clone(), subjects.len()).is_some() {
            return Err(parse_error(subjects_name, line, format!("duplicate subject_id `{id}`")));
        }
        subjects.push(Subject {
            id,
            censor_time,
            baseline: baseline.into(),
            visits: Vec::new(),
        });
    }

    let mut rdr = reader(visits);
    let visit_names = check_header(visits_name, rdr.headers()?, &VISIT_KEYS)?;
    if let Some(shared) = visit_names.iter().find(|n| baseline_names.contains(n)) {
        return Err(Error::SchemaMismatch(format!(
            "column `{shared}` appears in both the subjects and the visits file"
        )));
    }
    let width = VISIT_KEYS.len() + visit_names.len();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != width {
            return Err(parse_error(
                visits_name,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let id = &record[0];
        let &si = index.get(id).ok_or_else(|| Error::UnknownSubject {
            subject: id.to_string(),
            line,
        })?;
        let time = parse_number(visits_name, line, "time", &record[1])?;
        if time <= 0.0 {
            return Err(parse_error(visits_name, line, "visit time must be positive"));
        }
        let kind: VisitKind = record[2]
            .parse()
            .map_err(|m: String| parse_error(visits_name, line, m))?;
        let covariates = visit_names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let cell = &record[VISIT_KEYS.len() + j];
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    parse_number(visits_name, line, name, cell)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        let subject = &mut subjects[si];
        if time > subject.censor_time {
            return Err(Error::VisitAfterCensoring {
                subject: subject.id.clone(),
                time,
                censor_time: subject.censor_time,
                line,
            });
        }
        if subject.visits.iter().any(|v| v.time == time && v.kind == kind) {
            return Err(Error::DuplicateVisit {
                subject: subject.id.clone(),
                time,
                kind: kind.as_str().to_string(),
            });
        }
        subject.visits.push(Visit {
            time,
            kind,
            covariates: CovariateVector::new(covariates),
        });
    }

    let registry = CovariateRegistry::new(baseline_names, visit_names)?;
    Cohort::new(subjects, registry, tau)
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // `Display` for f64 prints the shortest representation that parses back exactly.
        format!("{v}")
    }
}

/// Writes a cohort in the ingestion schema.
pub fn write_cohort<S: Write, V: Write>(cohort: &Cohort, subjects: S, visits: V) -> Result<()> {
    let registry = cohort.registry();
    let mut w = csv::Writer::from_writer(subjects);
    let mut header: Vec<&str> = SUBJECT_KEYS.to_vec();
    header.extend(registry.baseline.iter().map(String::as_str));
    w.write_record(&header)?;
    for s in cohort.subjects() {
        let mut row = vec![s.id.clone(), cell(s.censor_time)];
        row.extend(s.baseline.values().iter().map(|&v| cell(v)));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(visits);
    let mut header: Vec<&str> = VISIT_KEYS.to_vec();
    header.extend(registry.visit.iter().map(String::as_str));
    w.write_record(&header)?;
    for s in cohort.subjects() {
        for v in &s.visits {
            let mut row = vec![s.id.clone(), cell(v.time), v.kind.as_str().to_string()];
            row.extend(v.covariates.values().iter().map(|&x| cell(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cohort_files(
    cohort: &Cohort,
    subjects_path: impl AsRef<Path>,
    visits_path: impl AsRef<Path>,
) -> Result<()> {
    write_cohort(
        cohort,
        File::create(subjects_path)?,
        File::create(visits_path)?,
    )
}
