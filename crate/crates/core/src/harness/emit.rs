use super::{HarnessError, HarnessResult, ReportBundle, Table};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// `%g`-style rendering with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa), exp)
    }
}

fn csv_text(table: &Table) -> String {
    let mut s = table.columns.join(",");
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| format_sig(*v, 12)).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

fn write_file(path: &Path, text: &str) -> HarnessResult<()> {
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write one table as CSV with a header row.
pub fn write_csv(table: &Table, path: &Path) -> HarnessResult<()> {
    write_file(path, &csv_text(table))
}

/// Write `report.json` and one CSV per table into `dir`.
pub fn emit(bundle: &ReportBundle, dir: &Path) -> HarnessResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for table in &bundle.tables {
        let path = dir.join(format!("{}.csv", table.name));
        write_csv(table, &path)?;
        written.push(path);
    }
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(bundle)
        .map_err(|e| HarnessError::Config(format!("cannot serialize report: {e}")))?;
    write_file(&path, &(json + "\n"))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.0, 12), "0");
        assert_eq!(format_sig(1.0, 12), "1");
        assert_eq!(format_sig(0.05, 12), "0.05");
        assert_eq!(format_sig(2.0 / 3.0, 12), "0.666666666667");
        assert_eq!(format_sig(-1234.5, 12), "-1234.5");
        assert_eq!(format_sig(1.5e-7, 12), "1.5e-7");
        assert_eq!(format_sig(2.5e13, 12), "2.5e13");
        assert_eq!(format_sig(f64::NAN, 12), "nan");
    }

    #[test]
    fn csv_has_header() {
        let t = Table {
            name: "x".into(),
            columns: vec!["a".into(), "b".into()],
            rows: vec![vec![1.0, 0.5]],
        };
        assert_eq!(csv_text(&t), "a,b\n1,0.5\n");
    }
}
