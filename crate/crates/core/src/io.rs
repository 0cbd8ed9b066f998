//! CSV formats shared by the synthetic-data generator and the CLI.
//!
//! Every file starts with a header row. Column names carry their unit
//! (`B_tesla`, `f_hz`, ...); unknown columns are rejected so that a file in
//! millitesla cannot be read as tesla by accident. Numbers are written in
//! Rust's shortest round-trip form, so writing the same data twice gives the
//! same bytes.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fitting::{
    AngleRow, AngleSeries, PeakPosition, S21Row, S21Trace, SaturationCurve, SaturationRow, SweepRow, SweepTrace,
    TemperatureRow, TemperatureSeries,
};
use crate::spin_levels::TransitionLabel;

pub const SWEEP_COLUMNS: [&str; 3] = ["B_tesla", "f_hz", "q_inv"];
pub const S21_COLUMNS: [&str; 3] = ["f_hz", "s21_re", "s21_im"];
pub const SATURATION_COLUMNS: [&str; 2] = ["p_watt", "q_inv"];
pub const ANGLE_COLUMNS: [&str; 2] = ["theta_deg", "g"];
pub const PEAK_COLUMNS: [&str; 3] = ["f_hz", "B_tesla", "label"];
pub const TEMPERATURE_COLUMNS: [&str; 7] = [
    "t_kelvin",
    "area_central",
    "area_central_err",
    "area_sat_low",
    "area_sat_low_err",
    "area_sat_high",
    "area_sat_high_err",
];

impl Table {
    /// Converts a row-level validation error (1-based data row) into a CSV
    /// diagnostic at the row's physical line.
    fn at_line(&self, e: Error) -> Error {
        match e {
            Error::InvalidRow { row, message } => {
                let line = row
                    .checked_sub(1)
                    .and_then(|i| self.records.get(i))
                    .map_or(row as u64 + 1, |(l, _)| *l);
                Error::Csv { line, message }
            }
            other => other,
        }
    }
}

struct Table {
    columns: HashMap<String, usize>,
    records: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read<R: Read>(reader: R, required: &[&str], optional: &[&str]) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let mut columns = HashMap::new();
        for (i, h) in headers.iter().enumerate() {
            if !required.contains(&h) && !optional.contains(&h) {
                let mut known: Vec<&str> = required.iter().chain(optional).copied().collect();
                known.sort_unstable();
                return Err(Error::Csv {
                    line: 1,
                    message: format!("unknown column `{h}` (expected {})", known.join(", ")),
                });
            }
            if columns.insert(h.to_string(), i).is_some() {
                return Err(Error::Csv { line: 1, message: format!("duplicate column `{h}`") });
            }
        }
        for r in required {
            if !columns.contains_key(*r) {
                return Err(Error::Csv { line: 1, message: format!("missing column `{r}`") });
            }
        }
        let mut records = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            records.push((line, rec));
        }
        Ok(Table { columns, records })
    }

    fn text<'a>(&self, rec: &'a csv::StringRecord, col: &str) -> Option<&'a str> {
        self.columns.get(col).and_then(|&i| rec.get(i)).filter(|s| !s.is_empty())
    }

    fn number(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<f64> {
        let s = self
            .text(rec, col)
            .ok_or_else(|| Error::Csv { line, message: format!("empty `{col}`") })?;
        parse_number(line, col, s)
    }

    fn optional(&self, line: u64, rec: &csv::StringRecord, col: &str) -> Result<Option<f64>> {
        self.text(rec, col).map(|s| parse_number(line, col, s)).transpose()
    }
}

fn parse_number(line: u64, col: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Csv { line, message: format!("`{col}`: cannot parse `{s}` as a number") })
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv { line, message: e.to_string() }
}

pub fn read_sweep<R: Read>(r: R) -> Result<SweepTrace> {
    let t = Table::read(r, &SWEEP_COLUMNS, &[])?;
    let rows = t
        .records
        .iter()
        .map(|(l, rec)| {
            Ok(SweepRow {
                b: t.number(*l, rec, "B_tesla")?,
                f0: t.number(*l, rec, "f_hz")?,
                q_inv: t.number(*l, rec, "q_inv")?,
            })
        })
        .collect::<Result<_>>()?;
    let trace = SweepTrace { rows };
    trace.validate().map_err(|e| t.at_line(e))?;
    Ok(trace)
}

pub fn read_s21<R: Read>(r: R) -> Result<S21Trace> {
    let t = Table::read(r, &S21_COLUMNS, &[])?;
    let rows = t
        .records
        .iter()
        .map(|(l, rec)| {
            Ok(S21Row {
                f: t.number(*l, rec, "f_hz")?,
                re: t.number(*l, rec, "s21_re")?,
                im: t.number(*l, rec, "s21_im")?,
            })
        })
        .collect::<Result<_>>()?;
    let trace = S21Trace { rows };
    trace.validate().map_err(|e| t.at_line(e))?;
    Ok(trace)
}

/// Reads drive power and spin loss; the resonator Q values are not part of
/// the file.
pub fn read_saturation<R: Read>(r: R, q: f64, q_ext: f64) -> Result<SaturationCurve> {
    let t = Table::read(r, &SATURATION_COLUMNS, &[])?;
    let rows = t
        .records
        .iter()
        .map(|(l, rec)| {
            Ok(SaturationRow {
                p_drive: t.number(*l, rec, "p_watt")?,
                qs_inv: t.number(*l, rec, "q_inv")?,
            })
        })
        .collect::<Result<_>>()?;
    let curve = SaturationCurve { rows, q, q_ext };
    curve.validate().map_err(|e| t.at_line(e))?;
    Ok(curve)
}

pub fn read_temperature<R: Read>(r: R) -> Result<TemperatureSeries> {
    let t = Table::read(r, &TEMPERATURE_COLUMNS[..2], &TEMPERATURE_COLUMNS[2..])?;
    let rows = t
        .records
        .iter()
        .map(|(l, rec)| {
            Ok(TemperatureRow {
                t: t.number(*l, rec, "t_kelvin")?,
                area_central: t.number(*l, rec, "area_central")?,
                area_central_err: t.optional(*l, rec, "area_central_err")?,
                area_sat_low: t.optional(*l, rec, "area_sat_low")?,
                area_sat_low_err: t.optional(*l, rec, "area_sat_low_err")?,
                area_sat_high: t.optional(*l, rec, "area_sat_high")?,
                area_sat_high_err: t.optional(*l, rec, "area_sat_high_err")?,
            })
        })
        .collect::<Result<_>>()?;
    let ts = TemperatureSeries { rows };
    ts.validate().map_err(|e| t.at_line(e))?;
    Ok(ts)
}

pub fn read_angle<R: Read>(r: R) -> Result<AngleSeries> {
    let t = Table::read(r, &ANGLE_COLUMNS, &[])?;
    let rows = t
        .records
        .iter()
        .map(|(l, rec)| {
            Ok(AngleRow {
                theta_deg: t.number(*l, rec, "theta_deg")?,
                g: t.number(*l, rec, "g")?,
            })
        })
        .collect::<Result<_>>()?;
    let s = AngleSeries { rows };
    s.validate().map_err(|e| t.at_line(e))?;
    Ok(s)
}

pub fn read_peaks<R: Read>(r: R) -> Result<Vec<PeakPosition>> {
    let t = Table::read(r, &PEAK_COLUMNS, &[])?;
    t.records
        .iter()
        .map(|(l, rec)| {
            let label = match t.text(rec, "label") {
                Some("central") => TransitionLabel::Central,
                Some("sat_low") => TransitionLabel::SatLow,
                Some("sat_high") => TransitionLabel::SatHigh,
                other => {
                    return Err(Error::Csv {
                        line: *l,
                        message: format!("label must be central, sat_low or sat_high, got `{}`", other.unwrap_or("")),
                    })
                }
            };
            Ok(PeakPosition {
                f_res: t.number(*l, rec, "f_hz")?,
                b_peak: t.number(*l, rec, "B_tesla")?,
                label,
            })
        })
        .collect()
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes a header and rows of already formatted cells.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(header).map_err(io)?;
    for r in rows {
        wtr.write_record(&r).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sweep<W: Write>(w: W, t: &SweepTrace) -> Result<()> {
    write_table(
        w,
        &SWEEP_COLUMNS,
        t.rows.iter().map(|r| vec![fmt_f64(r.b), fmt_f64(r.f0), fmt_f64(r.q_inv)]),
    )
}

pub fn write_s21<W: Write>(w: W, t: &S21Trace) -> Result<()> {
    write_table(
        w,
        &S21_COLUMNS,
        t.rows.iter().map(|r| vec![fmt_f64(r.f), fmt_f64(r.re), fmt_f64(r.im)]),
    )
}

pub fn write_saturation<W: Write>(w: W, c: &SaturationCurve) -> Result<()> {
    write_table(
        w,
        &SATURATION_COLUMNS,
        c.rows.iter().map(|r| vec![fmt_f64(r.p_drive), fmt_f64(r.qs_inv)]),
    )
}

pub fn write_temperature<W: Write>(w: W, ts: &TemperatureSeries) -> Result<()> {
    write_table(
        w,
        &TEMPERATURE_COLUMNS,
        ts.rows.iter().map(|r| {
            vec![
                fmt_f64(r.t),
                fmt_f64(r.area_central),
                fmt_opt(r.area_central_err),
                fmt_opt(r.area_sat_low),
                fmt_opt(r.area_sat_low_err),
                fmt_opt(r.area_sat_high),
                fmt_opt(r.area_sat_high_err),
            ]
        }),
    )
}

pub fn write_angle<W: Write>(w: W, s: &AngleSeries) -> Result<()> {
    write_table(
        w,
        &ANGLE_COLUMNS,
        s.rows.iter().map(|r| vec![fmt_f64(r.theta_deg), fmt_f64(r.g)]),
    )
}

pub fn write_peaks<W: Write>(w: W, peaks: &[PeakPosition]) -> Result<()> {
    write_table(
        w,
        &PEAK_COLUMNS,
        peaks
            .iter()
            .map(|p| vec![fmt_f64(p.f_res), fmt_f64(p.b_peak), p.label.as_str().to_string()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_round_trip_is_exact() {
        let t = SweepTrace {
            rows: (0..5)
                .map(|i| SweepRow { b: 0.1 * i as f64 / 3.0, f0: 5e9 + i as f64 * 0.1, q_inv: 1e-5 / 7.0 })
                .collect(),
        };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &t).unwrap();
        assert!(buf.starts_with(b"B_tesla,f_hz,q_inv\n"));
        assert_eq!(read_sweep(&buf[..]).unwrap(), t);
    }

    #[test]
    fn non_monotone_names_the_line() {
        let text = "B_tesla,f_hz,q_inv\n0.0,5e9,1e-5\n0.1,5e9,1e-5\n0.05,5e9,1e-5\n";
        match read_sweep(text.as_bytes()).unwrap_err() {
            Error::Csv { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("monotone"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
        // comment lines still count
        let text = format!("# produced by a test\n{text}");
        assert!(matches!(read_sweep(text.as_bytes()).unwrap_err(), Error::Csv { line: 5, .. }));
    }

    #[test]
    fn unit_mistakes_are_rejected() {
        let err = read_sweep("B_mT,f_hz,q_inv\n1,5e9,1e-5\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown column `B_mT`"), "{err}");
        let err = read_sweep("B_tesla,f_hz\n1,5e9\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("missing column `q_inv`"), "{err}");
    }

    #[test]
    fn bad_number_reports_line() {
        let err = read_angle("theta_deg,g\n0,2.0\n10,two\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
    }

    #[test]
    fn temperature_optional_columns() {
        let text = "t_kelvin,area_central\n0.05,2.0\n0.3,1.0\n";
        let ts = read_temperature(text.as_bytes()).unwrap();
        assert_eq!(ts.rows.len(), 2);
        assert!(!ts.has_satellites());
        let mut buf = Vec::new();
        write_temperature(&mut buf, &ts).unwrap();
        assert_eq!(read_temperature(&buf[..]).unwrap(), ts);
    }

    #[test]
    fn peaks_round_trip() {
        let p = vec![
            PeakPosition { f_res: 5e9, b_peak: 0.15, label: TransitionLabel::SatLow },
            PeakPosition { f_res: 5e9, b_peak: 0.178, label: TransitionLabel::Central },
        ];
        let mut buf = Vec::new();
        write_peaks(&mut buf, &p).unwrap();
        assert_eq!(read_peaks(&buf[..]).unwrap(), p);
    }
}
