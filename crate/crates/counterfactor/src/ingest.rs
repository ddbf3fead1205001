//! Long-format CSV ingestion and its inverse.
//!
//! The expected file has a header row with columns `unit`, `time`, `y`,
//! `d`, then one column per observed series. Each data row holds one
//! (unit, date) observation. The panel must be balanced: every unit
//! observed at every date, exactly once. Units keep their order of first
//! appearance; dates are sorted ascending numerically.
//!
//! The wide panel is assembled unit-major, series-minor: with K series
//! per unit, column i * K + k holds unit i's k-th series. Each unit's
//! controls default to its own series, with an optional appended
//! constant.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::{PanelMatrix, UnitData};

/// How to read a long-format CSV.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Series columns to load, in this order; None loads every column
    /// beyond unit/time/y/d in file order.
    pub series_columns: Option<Vec<String>>,
    /// Series to use as each unit's controls; None uses all its loaded
    /// series. Must name loaded series.
    pub control_columns: Option<Vec<String>>,
    /// Append a constant control column.
    pub add_const: bool,
}

/// Names and coordinates recovered from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMeta {
    /// Unit identifiers in order of first appearance.
    pub unit_ids: Vec<String>,
    /// Distinct dates, ascending.
    pub dates: Vec<f64>,
    /// Loaded series column names, in panel column order within a unit.
    pub series_names: Vec<String>,
}

/// A parsed long-format CSV.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub panel: PanelMatrix,
    pub units: Vec<UnitData>,
    pub meta: PanelMeta,
}

fn parse_cell(field: &str, unit: &str, time: &str, column: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        Error::Data(format!(
            "unit {unit}, time {time}: column {column} is not numeric: {field:?}"
        ))
    })?;
    if !v.is_finite() {
        return Err(Error::Data(format!(
            "unit {unit}, time {time}: column {column} is not finite: {field:?}"
        )));
    }
    Ok(v)
}

/// Read a long-format CSV into a panel, one data block per unit, and the
/// names behind them.
pub fn ingest_long_csv(path: &Path, options: &IngestOptions) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    let col_index = |name: &str| -> Result<usize> {
        names.iter().position(|n| n == name).ok_or_else(|| {
            Error::Data(format!("missing required column {name:?}; header is {names:?}"))
        })
    };
    let unit_col = col_index("unit")?;
    let time_col = col_index("time")?;
    let y_col = col_index("y")?;
    let d_col = col_index("d")?;

    let mut series_cols: Vec<(String, usize)> = Vec::new();
    match &options.series_columns {
        Some(selected) => {
            for name in selected {
                let idx = names.iter().position(|n| n == name).ok_or_else(|| {
                    Error::Config(format!("series column {name:?} is not in the file"))
                })?;
                series_cols.push((name.clone(), idx));
            }
        }
        None => {
            for (idx, name) in names.iter().enumerate() {
                if ![unit_col, time_col, y_col, d_col].contains(&idx) {
                    series_cols.push((name.clone(), idx));
                }
            }
        }
    }
    if series_cols.is_empty() {
        return Err(Error::Data(
            "the file has no series columns beyond unit, time, y, d".into(),
        ));
    }
    let k = series_cols.len();

    // rows become (unit index, time, y, d, series values)
    struct Row {
        unit: usize,
        time: f64,
        y: f64,
        d: f64,
        series: Vec<f64>,
    }
    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_lookup: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Row> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("row {}: {e}", line + 2)))?;
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| {
                Error::Data(format!("row {}: too few fields", line + 2))
            })
        };
        let unit_id = field(unit_col)?.to_string();
        if unit_id.is_empty() {
            return Err(Error::Data(format!("row {}: empty unit identifier", line + 2)));
        }
        let time_str = field(time_col)?.to_string();
        let time = parse_cell(&time_str, &unit_id, &time_str, "time")?;
        let y = parse_cell(field(y_col)?, &unit_id, &time_str, "y")?;
        let d = parse_cell(field(d_col)?, &unit_id, &time_str, "d")?;
        let mut series = Vec::with_capacity(k);
        for (name, idx) in &series_cols {
            series.push(parse_cell(field(*idx)?, &unit_id, &time_str, name)?);
        }
        let unit = match unit_lookup.get(&unit_id) {
            Some(&i) => i,
            None => {
                let i = unit_ids.len();
                unit_lookup.insert(unit_id.clone(), i);
                unit_ids.push(unit_id);
                i
            }
        };
        rows.push(Row { unit, time, y, d, series });
    }
    if rows.is_empty() {
        return Err(Error::Data("the file has no data rows".into()));
    }

    let mut dates: Vec<f64> = rows.iter().map(|r| r.time).collect();
    dates.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    dates.dedup();
    let date_index = |time: f64| -> usize {
        dates.binary_search_by(|probe| probe.partial_cmp(&time).unwrap()).expect("known date")
    };

    let n = unit_ids.len();
    let t_len = dates.len();
    let mut grid: Vec<Option<usize>> = vec![None; n * t_len];
    for (row_idx, row) in rows.iter().enumerate() {
        let slot = &mut grid[row.unit * t_len + date_index(row.time)];
        if slot.is_some() {
            return Err(Error::Data(format!(
                "duplicate observation for unit {}, time {}",
                unit_ids[row.unit], row.time
            )));
        }
        *slot = Some(row_idx);
    }
    let mut missing: Vec<String> = Vec::new();
    for i in 0..n {
        for (j, date) in dates.iter().enumerate() {
            if grid[i * t_len + j].is_none() {
                missing.push(format!("({}, {})", unit_ids[i], date));
            }
        }
    }
    if !missing.is_empty() {
        let extra = missing.len().saturating_sub(8);
        missing.truncate(8);
        let mut msg = format!(
            "panel is unbalanced; missing (unit, time) pairs: {}",
            missing.join(", ")
        );
        if extra > 0 {
            msg.push_str(&format!(" and {extra} more"));
        }
        return Err(Error::Data(msg));
    }
    if t_len < 2 {
        return Err(Error::Data(format!("need at least 2 dates, got {t_len}")));
    }
    if n * k < 2 {
        return Err(Error::Data(
            "need at least 2 panel columns in total; add units or series".into(),
        ));
    }

    // control selection, by position within the loaded series
    let control_slots: Vec<usize> = match &options.control_columns {
        None => (0..k).collect(),
        Some(selected) => {
            let mut slots = Vec::with_capacity(selected.len());
            for name in selected {
                let slot = series_cols.iter().position(|(n, _)| n == name).ok_or_else(|| {
                    Error::Config(format!(
                        "control column {name:?} is not among the loaded series"
                    ))
                })?;
                slots.push(slot);
            }
            slots
        }
    };
    let n_controls = control_slots.len() + usize::from(options.add_const);

    let mut x = DMatrix::<f64>::zeros(t_len, n * k);
    let mut units = Vec::with_capacity(n);
    for i in 0..n {
        let mut outcome = DVector::<f64>::zeros(t_len);
        let mut treatment = DVector::<f64>::zeros(t_len);
        let mut controls = DMatrix::<f64>::zeros(t_len, n_controls);
        for j in 0..t_len {
            let row = &rows[grid[i * t_len + j].expect("balanced panel")];
            outcome[j] = row.y;
            treatment[j] = row.d;
            for (s, &value) in row.series.iter().enumerate() {
                x[(j, i * k + s)] = value;
            }
            for (c, &slot) in control_slots.iter().enumerate() {
                controls[(j, c)] = row.series[slot];
            }
            if options.add_const {
                controls[(j, n_controls - 1)] = 1.0;
            }
        }
        units.push(
            UnitData::new(outcome, treatment, controls)
                .map_err(|e| Error::for_unit(unit_ids[i].clone(), e))?,
        );
    }

    Ok(Ingested {
        panel: PanelMatrix::new(x)?,
        units,
        meta: PanelMeta {
            unit_ids,
            dates,
            series_names: series_cols.into_iter().map(|(name, _)| name).collect(),
        },
    })
}

/// Write a panel and its units as a long-format CSV that [`ingest_long_csv`]
/// reads back exactly. The series count must divide evenly across units;
/// unit i owns panel columns i * K .. (i + 1) * K. Units are named
/// u1..uN, dates 1..T, series x1..xK. Floats use shortest round-trip
/// formatting, so a write-read cycle is lossless.
pub fn write_long_csv(path: &Path, x: &PanelMatrix, units: &[UnitData]) -> Result<()> {
    let n = units.len();
    if n == 0 {
        return Err(Error::Input("no units supplied".into()));
    }
    let (t_len, l) = (x.n_dates(), x.n_series());
    if l % n != 0 {
        return Err(Error::Input(format!(
            "{l} series cannot be split evenly over {n} units"
        )));
    }
    let k = l / n;
    for (i, unit) in units.iter().enumerate() {
        if unit.n_dates() != t_len {
            return Err(Error::Input(format!(
                "unit {} has {} dates but the panel has {t_len}",
                i + 1,
                unit.n_dates()
            )));
        }
    }

    let mut out = String::new();
    out.push_str("unit,time,y,d");
    for s in 1..=k {
        out.push_str(&format!(",x{s}"));
    }
    out.push('\n');
    for (i, unit) in units.iter().enumerate() {
        for j in 0..t_len {
            out.push_str(&format!("u{},{},{},{}", i + 1, j + 1, unit.outcome[j], unit.treatment[j]));
            for s in 0..k {
                out.push_str(&format!(",{}", x.values()[(j, i * k + s)]));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate, DgpSpec};
    use std::fs;

    fn write_temp(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, content).unwrap();
        path
    }

    #[test]
    fn layout_is_unit_major_series_minor() {
        let dir = tempfile::tempdir().unwrap();
        // unit b appears first and dates arrive shuffled; 2 units x 3
        // dates x 2 series
        let path = write_temp(
            &dir,
            "p.csv",
            "unit,time,y,d,a,b\n\
             b,2,20.0,0.2,21.0,22.0\n\
             b,1,10.0,0.1,11.0,12.0\n\
             a,1,-10.0,1.1,-11.0,-12.0\n\
             b,3,30.0,0.3,31.0,32.0\n\
             a,3,-30.0,1.3,-31.0,-32.0\n\
             a,2,-20.0,1.2,-21.0,-22.0\n",
        );
        let got = ingest_long_csv(&path, &IngestOptions::default()).unwrap();
        assert_eq!(got.meta.unit_ids, vec!["b", "a"]);
        assert_eq!(got.meta.dates, vec![1.0, 2.0, 3.0]);
        assert_eq!(got.meta.series_names, vec!["a", "b"]);
        let x = got.panel.values();
        assert_eq!(x.shape(), (3, 4));
        // unit b owns columns 0..2, unit a columns 2..4; rows follow
        // sorted dates
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![11.0, 12.0, -11.0, -12.0]);
        assert_eq!(x.row(2).iter().copied().collect::<Vec<_>>(), vec![31.0, 32.0, -31.0, -32.0]);
        assert_eq!(got.units[0].outcome.as_slice(), &[10.0, 20.0, 30.0]);
        assert_eq!(got.units[1].treatment.as_slice(), &[1.1, 1.2, 1.3]);
        // default controls are the unit's own series
        assert_eq!(got.units[1].controls.column(0).iter().copied().collect::<Vec<_>>(), vec![-11.0, -21.0, -31.0]);
    }

    #[test]
    fn round_trip_is_lossless() {
        let spec = DgpSpec::panel(17, 3, 0.5, 2, 61).unwrap();
        let sample = generate(&spec, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_long_csv(&path, &sample.panel, &sample.units).unwrap();
        let got = ingest_long_csv(&path, &IngestOptions::default()).unwrap();
        assert_eq!(got.panel.values(), sample.panel.values());
        for (a, b) in got.units.iter().zip(&sample.units) {
            assert_eq!(a.outcome, b.outcome);
            assert_eq!(a.treatment, b.treatment);
            assert_eq!(a.controls, b.controls);
        }
        assert_eq!(got.meta.unit_ids, vec!["u1", "u2", "u3"]);
        assert_eq!(got.meta.series_names, vec!["x1", "x2"]);
    }

    #[test]
    fn missing_pairs_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            &dir,
            "m.csv",
            "unit,time,y,d,a\n\
             a,1,1,1,1\n\
             a,2,1,1,1\n\
             b,1,1,1,1\n",
        );
        let err = ingest_long_csv(&path, &IngestOptions::default()).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("(b, 2)"), "message: {msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            &dir,
            "d.csv",
            "unit,time,y,d,a\n\
             a,1,1,1,1\n\
             a,1,2,2,2\n",
        );
        let err = ingest_long_csv(&path, &IngestOptions::default()).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("duplicate") && msg.contains("a")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cells_name_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            &dir,
            "n.csv",
            "unit,time,y,d,a\n\
             a,1,1,oops,1\n\
             a,2,1,1,1\n",
        );
        let err = ingest_long_csv(&path, &IngestOptions::default()).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("column d") && msg.contains("oops")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn series_and_control_selection() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            &dir,
            "s.csv",
            "unit,time,y,d,a,b,c\n\
             a,1,1,1,10,20,30\n\
             a,2,1,1,11,21,31\n\
             b,1,1,1,40,50,60\n\
             b,2,1,1,41,51,61\n",
        );
        // select two series in reversed order, control on one of them,
        // and append a constant
        let opts = IngestOptions {
            series_columns: Some(vec!["c".into(), "a".into()]),
            control_columns: Some(vec!["a".into()]),
            add_const: true,
        };
        let got = ingest_long_csv(&path, &opts).unwrap();
        assert_eq!(got.meta.series_names, vec!["c", "a"]);
        let x = got.panel.values();
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![30.0, 10.0, 60.0, 40.0]);
        assert_eq!(got.units[0].n_controls(), 2);
        assert_eq!(got.units[0].controls.column(0).iter().copied().collect::<Vec<_>>(), vec![10.0, 11.0]);
        assert_eq!(got.units[0].controls.column(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0]);

        let bad = IngestOptions {
            control_columns: Some(vec!["zz".into()]),
            ..Default::default()
        };
        assert!(matches!(ingest_long_csv(&path, &bad), Err(Error::Config(_))));
        let bad = IngestOptions {
            series_columns: Some(vec!["zz".into()]),
            ..Default::default()
        };
        assert!(matches!(ingest_long_csv(&path, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn single_unit_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(
            &dir,
            "one.csv",
            "unit,time,y,d,a,b\n\
             solo,1,1,0.5,1,2\n\
             solo,2,2,0.6,3,4\n\
             solo,3,3,0.7,5,6\n",
        );
        let got = ingest_long_csv(&path, &IngestOptions::default()).unwrap();
        assert_eq!(got.units.len(), 1);
        assert_eq!(got.panel.values().shape(), (3, 2));
    }

    #[test]
    fn missing_required_column_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_temp(&dir, "h.csv", "unit,time,y,a\na,1,1,1\n");
        let err = ingest_long_csv(&path, &IngestOptions::default()).unwrap_err();
        match err {
            Error::Data(msg) => assert!(msg.contains("\"d\"")),
            other => panic!("expected data error, got {other:?}"),
        }
        assert!(matches!(
            ingest_long_csv(dir.path().join("absent.csv").as_path(), &IngestOptions::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn series_order_in_the_file_does_not_change_estimates() {
        use crate::basis::Monomials;
        use crate::pipeline::{analyze, AnalysisOptions};

        let spec = DgpSpec::panel(60, 4, 0.0, 1, 62).unwrap();
        let sample = generate(&spec, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("base.csv");
        write_long_csv(&path, &sample.panel, &sample.units).unwrap();

        let forward = ingest_long_csv(
            &path,
            &IngestOptions {
                series_columns: Some(vec!["x1".into(), "x2".into()]),
                ..Default::default()
            },
        )
        .unwrap();
        let reversed = ingest_long_csv(
            &path,
            &IngestOptions {
                series_columns: Some(vec!["x2".into(), "x1".into()]),
                ..Default::default()
            },
        )
        .unwrap();

        let basis = Monomials::new(1).unwrap();
        let opts = AnalysisOptions::default();
        let a = analyze(&forward.panel, &forward.units, &basis, &opts).unwrap();
        let b = analyze(&reversed.panel, &reversed.units, &basis, &opts).unwrap();
        assert!((a.estimands.overall - b.estimands.overall).abs() < 1e-10);
        for (x, y) in a.date_cis.iter().zip(&b.date_cis) {
            assert!((x.point - y.point).abs() < 1e-10);
            assert!((x.std_error - y.std_error).abs() < 1e-10);
        }
    }
}
