//! Readers and writers for every file the harness consumes or produces.

use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use cropcast_core::assimilation::WindowRecord;
use cropcast_core::crop_model::{
    validate_weather, CropParams, CropState, ParamName, PartitionTable, WeatherDay, LAI,
};
use cropcast_core::forecaster::{DateSelector, FeatureRow, Predictor, Standardizer, YieldRecord};
use cropcast_core::observation::{Observation, ObservationSeries};
use cropcast_core::remote_sensing::{BandSample, Raster, ViIndex, ViVector, VI_COUNT};

use crate::error::{Context, Error, Result};

pub const NA: &str = "NA";

pub fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        NA.into()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.into(), fmt_f)
}

fn parse_f(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::input(format!("{what}: `{s}` is not a number")))
}

fn parse_opt(s: &str, what: &str) -> Result<Option<f64>> {
    if s.trim() == NA {
        Ok(None)
    } else {
        parse_f(s, what).map(Some)
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::input(format!("`{s}` is not an ISO-8601 date")))
}

/// Day offset of `date` within a season starting at `start`.
pub fn day_index(start: NaiveDate, date: NaiveDate, season_len: usize) -> Result<usize> {
    let d = (date - start).num_days();
    if d < 0 || d as usize > season_len {
        return Err(Error::input(format!(
            "date {date} lies outside the season {start} + {season_len} days"
        )));
    }
    Ok(d as usize)
}

pub fn date_at(start: NaiveDate, day: usize) -> NaiveDate {
    start + chrono::Days::new(day as u64)
}

/// A CSV file read fully into memory with its header checked.
struct Table {
    rows: Vec<csv::StringRecord>,
    /// Whether the file carries a leading `plot_id` column.
    plot_column: bool,
}

impl Table {
    /// `optional_plot` accepts the header with or without a leading `plot_id`.
    fn read(path: &Path, header: &[&str], optional_plot: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .in_file(path)?;
        let got: Vec<String> = rdr.headers().in_file(path)?.iter().map(str::to_string).collect();
        let plot_column = optional_plot && got.first().map(String::as_str) == Some("plot_id");
        let expected: Vec<&str> = if plot_column {
            std::iter::once("plot_id").chain(header.iter().copied()).collect()
        } else {
            header.to_vec()
        };
        if got != expected {
            return Err(Error::input(format!(
                "{}: expected header `{}`, found `{}`",
                path.display(),
                expected.join(","),
                got.join(",")
            )));
        }
        let rows = rdr
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .in_file(path)?;
        Ok(Self { rows, plot_column })
    }
}

fn row_context(path: &Path, i: usize) -> String {
    format!("{} row {}", path.display(), i + 2)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).in_file(dir)?;
    }
    csv::Writer::from_path(path).in_file(path)
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().in_file(path)
}

fn with_plot(plot: Option<&str>, rest: Vec<String>) -> Vec<String> {
    plot.map(str::to_string).into_iter().chain(rest).collect()
}

const WEATHER_HEADER: [&str; 6] = ["date", "tavg", "rad", "precip", "dewpoint", "wind"];

pub fn read_weather(path: &Path) -> Result<Vec<WeatherDay>> {
    let t = Table::read(path, &WEATHER_HEADER, false)?;
    let days = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            Ok(WeatherDay {
                date: parse_date(&r[0]).context(&ctx)?,
                tavg: parse_f(&r[1], "tavg").context(&ctx)?,
                rad: parse_f(&r[2], "rad").context(&ctx)?,
                precip: parse_f(&r[3], "precip").context(&ctx)?,
                dewpoint: parse_f(&r[4], "dewpoint").context(&ctx)?,
                wind: parse_f(&r[5], "wind").context(&ctx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if days.is_empty() {
        return Err(Error::input(format!("{}: no weather rows", path.display())));
    }
    validate_weather(&days).in_file(path)?;
    Ok(days)
}

pub fn write_weather(path: &Path, days: &[WeatherDay]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(WEATHER_HEADER).in_file(path)?;
    for d in days {
        w.write_record([
            d.date.to_string(),
            fmt_f(d.tavg),
            fmt_f(d.rad),
            fmt_f(d.precip),
            fmt_f(d.dewpoint),
            fmt_f(d.wind),
        ])
        .in_file(path)?;
    }
    finish(w, path)
}

/// Parameter text: one `name = value` per line, `#` comments, and one
/// `part = dvs leaf stem storage` line per partition-table row.
pub fn parse_params(text: &str) -> Result<CropParams> {
    let mut p = CropParams::default();
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let ctx = format!("line {}", i + 1);
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::input(format!("{ctx}: expected name = value")))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "part" {
            let f: Vec<f64> = v
                .split_whitespace()
                .map(|s| parse_f(s, "part"))
                .collect::<Result<_>>()
                .context(&ctx)?;
            if f.len() != 4 {
                return Err(Error::input(format!("{ctx}: part needs dvs and three fractions")));
            }
            rows.push((f[0], [f[1], f[2], f[3]]));
            continue;
        }
        let name: ParamName = k.parse().context(&ctx)?;
        if seen.contains(&name) {
            return Err(Error::input(format!("{ctx}: duplicate parameter {k}")));
        }
        seen.push(name);
        p.set(name, parse_f(v, k).context(&ctx)?);
    }
    if !rows.is_empty() {
        p.part_table = PartitionTable::new(rows)?;
    }
    p.validate()?;
    Ok(p)
}

pub fn params_text(p: &CropParams) -> String {
    let mut s = String::new();
    for name in ParamName::ALL {
        s.push_str(&format!("{name} = {}\n", p.get(name)));
    }
    for (dvs, f) in p.part_table.rows() {
        s.push_str(&format!("part = {dvs} {} {} {}\n", f[0], f[1], f[2]));
    }
    s
}

pub fn read_params(path: &Path) -> Result<CropParams> {
    parse_params(&std::fs::read_to_string(path).in_file(path)?).in_file(path)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).in_file(dir)?;
    }
    std::fs::write(path, text).in_file(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsRecord {
    pub plot_id: Option<String>,
    pub date: NaiveDate,
    pub lai: f64,
    pub lai_var: f64,
}

const OBS_HEADER: [&str; 3] = ["date", "lai", "lai_var"];

pub fn read_observations(path: &Path) -> Result<Vec<ObsRecord>> {
    let t = Table::read(path, &OBS_HEADER, true)?;
    let o = t.plot_column as usize;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            Ok(ObsRecord {
                plot_id: t.plot_column.then(|| r[0].to_string()),
                date: parse_date(&r[o]).context(&ctx)?,
                lai: parse_f(&r[o + 1], "lai").context(&ctx)?,
                lai_var: parse_f(&r[o + 2], "lai_var").context(&ctx)?,
            })
        })
        .collect()
}

pub fn write_observations(path: &Path, obs: &[ObsRecord]) -> Result<()> {
    let plots = obs.iter().any(|o| o.plot_id.is_some());
    let mut w = writer(path)?;
    let header: Vec<&str> = plots.then_some("plot_id").into_iter().chain(OBS_HEADER).collect();
    w.write_record(&header).in_file(path)?;
    for o in obs {
        let plot = plots.then(|| o.plot_id.as_deref().unwrap_or(""));
        w.write_record(with_plot(
            plot,
            vec![o.date.to_string(), fmt_f(o.lai), fmt_f(o.lai_var)],
        ))
        .in_file(path)?;
    }
    finish(w, path)
}

/// LAI observations of one plot as a series indexed by season day.
pub fn observation_series(
    records: &[&ObsRecord],
    start: NaiveDate,
    season_len: usize,
) -> Result<ObservationSeries> {
    let entries = records
        .iter()
        .map(|r| {
            let t = day_index(start, r.date, season_len)?;
            Ok(Observation::scalar(t, LAI, r.lai, r.lai_var)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationSeries::new(entries)?)
}

/// Records grouped by plot in order of first appearance; a file without a
/// plot column is one anonymous plot.
pub fn group_by_plot<T>(items: &[T], key: impl Fn(&T) -> Option<&str>) -> Vec<(Option<String>, Vec<&T>)> {
    let mut out: Vec<(Option<String>, Vec<&T>)> = Vec::new();
    for it in items {
        let k = key(it).map(str::to_string);
        match out.iter_mut().find(|(id, _)| *id == k) {
            Some((_, v)) => v.push(it),
            None => out.push((k, vec![it])),
        }
    }
    out
}

const STATE_HEADER: [&str; 7] = ["date", "dvs", "lai", "twlv", "twst", "twso", "twrt"];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub plot_id: Option<String>,
    pub date: NaiveDate,
    pub state: CropState,
}

pub fn write_trajectories(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let plots = rows.iter().any(|r| r.plot_id.is_some());
    let mut w = writer(path)?;
    let header: Vec<&str> = plots.then_some("plot_id").into_iter().chain(STATE_HEADER).collect();
    w.write_record(&header).in_file(path)?;
    for r in rows {
        let s = &r.state;
        let vals = [s.dvs, s.lai, s.twlv, s.twst, s.twso, s.twrt];
        let rest = std::iter::once(r.date.to_string())
            .chain(vals.iter().map(|v| fmt_f(*v)))
            .collect();
        w.write_record(with_plot(plots.then(|| r.plot_id.as_deref().unwrap_or("")), rest))
            .in_file(path)?;
    }
    finish(w, path)
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let t = Table::read(path, &STATE_HEADER, true)?;
    let o = t.plot_column as usize;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            let mut x = [0.0; 6];
            for (j, v) in x.iter_mut().enumerate() {
                *v = parse_f(&r[o + 1 + j], STATE_HEADER[j + 1]).context(&ctx)?;
            }
            Ok(TrajectoryRow {
                plot_id: t.plot_column.then(|| r[0].to_string()),
                date: parse_date(&r[o]).context(&ctx)?,
                state: CropState::from_slice(&x),
            })
        })
        .collect()
}

pub const DIAGNOSTICS_HEADER: [&str; 9] = [
    "window_start",
    "window_end",
    "tw",
    "r",
    "alpha_mean",
    "obj_before",
    "obj_after",
    "bg_rmse",
    "an_rmse",
];

pub fn write_diagnostics(path: &Path, rows: &[(Option<&str>, &WindowRecord)]) -> Result<()> {
    let plots = rows.iter().any(|r| r.0.is_some());
    let mut w = writer(path)?;
    let header: Vec<&str> = plots
        .then_some("plot_id")
        .into_iter()
        .chain(DIAGNOSTICS_HEADER)
        .collect();
    w.write_record(&header).in_file(path)?;
    for (plot, rec) in rows {
        let rest = vec![
            rec.start.to_string(),
            rec.end.to_string(),
            rec.tw.to_string(),
            fmt_opt(rec.r),
            fmt_opt(rec.alpha_mean()),
            fmt_opt(rec.objective_before),
            fmt_opt(rec.objective_after),
            fmt_opt(rec.background_rmse()),
            fmt_opt(rec.analysis_rmse()),
        ];
        w.write_record(with_plot(plots.then(|| plot.unwrap_or("")), rest))
            .in_file(path)?;
    }
    finish(w, path)
}

pub fn parse_raster(text: &str) -> Result<Raster> {
    let mut header: [Option<f64>; 4] = [None; 4];
    let names = ["ncols", "nrows", "cellsize", "nodata_value"];
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    while let Some(line) = lines.peek() {
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("").to_ascii_lowercase();
        if key.parse::<f64>().is_ok() {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| Error::input(format!("raster header `{key}` has no value")))?;
        match names.iter().position(|n| *n == key) {
            Some(i) => header[i] = Some(parse_f(value, &key)?),
            None if key == "xllcorner" || key == "yllcorner" => {}
            None => return Err(Error::input(format!("unknown raster header `{key}`"))),
        }
        lines.next();
    }
    let [Some(ncols), Some(nrows), Some(cell), Some(nodata)] = header else {
        return Err(Error::input(
            "raster header needs ncols, nrows, cellsize and nodata_value",
        ));
    };
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(Error::input("raster ncols and nrows must be positive integers"));
    }
    let values = lines
        .flat_map(str::split_whitespace)
        .map(|s| parse_f(s, "raster value"))
        .collect::<Result<Vec<_>>>()?;
    Ok(Raster::new(ncols as usize, nrows as usize, cell, values, nodata)?)
}

pub fn raster_text(r: &Raster) -> String {
    let mut s = format!(
        "ncols {}\nnrows {}\ncellsize {}\nnodata_value {}\n",
        r.width(),
        r.height(),
        r.cell_size(),
        r.nodata()
    );
    for row in r.values().chunks(r.width()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    parse_raster(&std::fs::read_to_string(path).in_file(path)?).in_file(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub plot_id: String,
    pub date: NaiveDate,
    pub sample: BandSample,
}

const BAND_HEADER: [&str; 7] = ["plot_id", "date", "b", "g", "r", "re", "nir"];

pub fn read_bands(path: &Path) -> Result<Vec<BandRow>> {
    let t = Table::read(path, &BAND_HEADER, false)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            let mut v = [0.0; 5];
            for (j, x) in v.iter_mut().enumerate() {
                *x = parse_f(&r[2 + j], BAND_HEADER[2 + j]).context(&ctx)?;
            }
            Ok(BandRow {
                plot_id: r[0].to_string(),
                date: parse_date(&r[1]).context(&ctx)?,
                sample: BandSample::new(v[0], v[1], v[2], v[3], v[4]).context(&ctx)?,
            })
        })
        .collect()
}

pub fn write_bands(path: &Path, rows: &[BandRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(BAND_HEADER).in_file(path)?;
    for r in rows {
        let s = &r.sample;
        w.write_record([
            r.plot_id.clone(),
            r.date.to_string(),
            fmt_f(s.b),
            fmt_f(s.g),
            fmt_f(s.r),
            fmt_f(s.re),
            fmt_f(s.nir),
        ])
        .in_file(path)?;
    }
    finish(w, path)
}

fn vi_names() -> impl Iterator<Item = &'static str> {
    ViIndex::ALL.into_iter().map(ViIndex::as_str)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViRow {
    pub plot_id: String,
    pub date: NaiveDate,
    pub vi: ViVector,
}

pub fn write_vi(path: &Path, rows: &[ViRow]) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = ["plot_id", "date"].into_iter().chain(vi_names()).collect();
    w.write_record(&header).in_file(path)?;
    for r in rows {
        let rec: Vec<String> = [r.plot_id.clone(), r.date.to_string()]
            .into_iter()
            .chain(r.vi.values().iter().map(|v| fmt_opt(*v)))
            .collect();
        w.write_record(&rec).in_file(path)?;
    }
    finish(w, path)
}

fn parse_vi(r: &csv::StringRecord, offset: usize) -> Result<ViVector> {
    let mut values = [None; VI_COUNT];
    for (j, (v, name)) in values.iter_mut().zip(vi_names()).enumerate() {
        *v = parse_opt(&r[offset + j], name)?;
    }
    Ok(ViVector::from_values(values)?)
}

pub fn read_vi(path: &Path) -> Result<Vec<ViRow>> {
    let header: Vec<&str> = ["plot_id", "date"].into_iter().chain(vi_names()).collect();
    let t = Table::read(path, &header, false)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            Ok(ViRow {
                plot_id: r[0].to_string(),
                date: parse_date(&r[1]).context(&ctx)?,
                vi: parse_vi(r, 2).context(&ctx)?,
            })
        })
        .collect()
}

/// `plot_id,date,<value columns>` numeric tables (LAI, canopy structure).
pub fn read_keyed(path: &Path, columns: &[&str]) -> Result<Vec<(String, NaiveDate, Vec<f64>)>> {
    let header: Vec<&str> = ["plot_id", "date"].iter().chain(columns).copied().collect();
    let t = Table::read(path, &header, false)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            let vals = columns
                .iter()
                .enumerate()
                .map(|(j, c)| parse_f(&r[2 + j], c))
                .collect::<Result<Vec<_>>>()
                .context(&ctx)?;
            Ok((r[0].to_string(), parse_date(&r[1]).context(&ctx)?, vals))
        })
        .collect()
}

pub fn write_keyed(path: &Path, columns: &[&str], rows: &[(String, NaiveDate, Vec<f64>)]) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = ["plot_id", "date"].iter().chain(columns).copied().collect();
    w.write_record(&header).in_file(path)?;
    for (id, date, vals) in rows {
        let rec: Vec<String> = [id.clone(), date.to_string()]
            .into_iter()
            .chain(vals.iter().map(|v| fmt_f(*v)))
            .collect();
        w.write_record(&rec).in_file(path)?;
    }
    finish(w, path)
}

/// `plot_id,date,dsm,dem` raster pairs; paths relative to the manifest.
pub fn read_raster_manifest(path: &Path) -> Result<Vec<(String, NaiveDate, Raster, Raster)>> {
    let t = Table::read(path, &["plot_id", "date", "dsm", "dem"], false)?;
    let base = path.parent().unwrap_or(Path::new("."));
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            Ok((
                r[0].to_string(),
                parse_date(&r[1]).context(&ctx)?,
                read_raster(&base.join(&r[2])).context(&ctx)?,
                read_raster(&base.join(&r[3])).context(&ctx)?,
            ))
        })
        .collect()
}

pub fn feature_header() -> Vec<&'static str> {
    ["plot_id", "date", "dvd"]
        .into_iter()
        .chain(vi_names())
        .chain(["cv", "ch", "lai", "tagp", "twso", "twlv", "twst", "twrt"])
        .collect()
}

pub fn write_features(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(feature_header()).in_file(path)?;
    for r in rows {
        let rec: Vec<String> = [r.plot_id.clone(), r.date.to_string(), r.dvd.to_string()]
            .into_iter()
            .chain(r.vi.values().iter().map(|v| fmt_opt(*v)))
            .chain(
                [r.cv, r.ch, r.lai, r.tagp, r.twso, r.twlv, r.twst, r.twrt]
                    .iter()
                    .map(|v| fmt_f(*v)),
            )
            .collect();
        w.write_record(&rec).in_file(path)?;
    }
    finish(w, path)
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let header = feature_header();
    let t = Table::read(path, &header, false)?;
    let tail = 3 + VI_COUNT;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            let f = |j: usize| parse_f(&r[tail + j], header[tail + j]);
            let row = FeatureRow {
                plot_id: r[0].to_string(),
                date: parse_date(&r[1]).context(&ctx)?,
                dvd: r[2]
                    .parse()
                    .map_err(|_| Error::input(format!("dvd: `{}` is not a day count", &r[2])))
                    .context(&ctx)?,
                vi: parse_vi(r, 3).context(&ctx)?,
                cv: f(0).context(&ctx)?,
                ch: f(1).context(&ctx)?,
                lai: f(2).context(&ctx)?,
                tagp: f(3).context(&ctx)?,
                twso: f(4).context(&ctx)?,
                twlv: f(5).context(&ctx)?,
                twst: f(6).context(&ctx)?,
                twrt: f(7).context(&ctx)?,
            };
            row.validate().context(&ctx)?;
            Ok(row)
        })
        .collect()
}

pub fn read_yields(path: &Path) -> Result<Vec<YieldRecord>> {
    let t = Table::read(path, &["plot_id", "yield_kg_ha"], false)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            YieldRecord::new(&r[0], parse_f(&r[1], "yield_kg_ha").context(&ctx)?).context(&ctx)
        })
        .collect()
}

pub fn write_yields(path: &Path, rows: &[YieldRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["plot_id", "yield_kg_ha"]).in_file(path)?;
    for r in rows {
        w.write_record([r.plot_id.clone(), fmt_f(r.yield_kg_ha)]).in_file(path)?;
    }
    finish(w, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub plot_id: String,
    pub measured: f64,
    pub predicted: f64,
}

pub fn read_paired(path: &Path) -> Result<Vec<PairedRow>> {
    let t = Table::read(path, &["plot_id", "measured", "predicted"], false)?;
    t.rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let ctx = row_context(path, i);
            Ok(PairedRow {
                plot_id: r[0].to_string(),
                measured: parse_f(&r[1], "measured").context(&ctx)?,
                predicted: parse_f(&r[2], "predicted").context(&ctx)?,
            })
        })
        .collect()
}

pub fn write_paired(path: &Path, rows: &[PairedRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["plot_id", "measured", "predicted"]).in_file(path)?;
    for r in rows {
        w.write_record([r.plot_id.clone(), fmt_f(r.measured), fmt_f(r.predicted)])
            .in_file(path)?;
    }
    finish(w, path)
}

const MODEL_MAGIC: &str = "cropcast-mlp 1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

/// Versioned plain-text model: layout header lines followed by one
/// whitespace-separated line per parameter block.
pub fn model_text(model: &Predictor, sel: DateSelector) -> String {
    let (kind, n) = match sel {
        DateSelector::First(n) => ("first", n),
        DateSelector::Last(n) => ("last", n),
    };
    let s = model.standardizer();
    format!(
        "{MODEL_MAGIC}\nselect {kind} {n}\ninputs {}\nhidden {}\ntarget {} {}\nx_mean {}\nx_scale {}\nweights {}\n",
        model.inputs(),
        model.hidden(),
        model.target_mean(),
        model.target_scale(),
        join(&s.mean),
        join(&s.scale),
        join(model.params()),
    )
}

pub fn parse_model(text: &str) -> Result<(Predictor, DateSelector)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MODEL_MAGIC) {
        return Err(Error::input(format!("model file must start with `{MODEL_MAGIC}`")));
    }
    let mut field = |name: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::input(format!("model file ends before `{name}`")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(name) {
            return Err(Error::input(format!("model file: expected `{name}` line")));
        }
        Ok(parts.map(str::to_string).collect())
    };
    let nums = |v: Vec<String>, name: &str| -> Result<Vec<f64>> {
        v.iter().map(|s| parse_f(s, name)).collect()
    };
    let count = |v: Vec<String>, name: &str| -> Result<usize> {
        match v.as_slice() {
            [s] => s
                .parse()
                .map_err(|_| Error::input(format!("model file: bad {name} count"))),
            _ => Err(Error::input(format!("model file: bad {name} line"))),
        }
    };
    let select = field("select")?;
    let sel = match select.as_slice() {
        [k, n] => {
            let n: usize = n
                .parse()
                .map_err(|_| Error::input("model file: bad date count"))?;
            match k.as_str() {
                "first" => DateSelector::First(n),
                "last" => DateSelector::Last(n),
                _ => return Err(Error::input("model file: select must be first or last")),
            }
        }
        _ => return Err(Error::input("model file: bad select line")),
    };
    let inputs = count(field("inputs")?, "inputs")?;
    let hidden = count(field("hidden")?, "hidden")?;
    let target = nums(field("target")?, "target")?;
    if target.len() != 2 {
        return Err(Error::input("model file: target needs mean and scale"));
    }
    let mean = nums(field("x_mean")?, "x_mean")?;
    let scale = nums(field("x_scale")?, "x_scale")?;
    let params = nums(field("weights")?, "weights")?;
    let model = Predictor::from_parts(
        inputs,
        hidden,
        Standardizer { mean, scale },
        target[0],
        target[1],
        params,
    )?;
    Ok((model, sel))
}

pub fn read_model(path: &Path) -> Result<(Predictor, DateSelector)> {
    parse_model(&std::fs::read_to_string(path).in_file(path)?).in_file(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cropcast_core::forecaster::PER_DATE_FEATURES;
    use cropcast_core::remote_sensing::compute_vi;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn date(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 4, d).unwrap()
    }

    #[test]
    fn params_round_trip_including_partition_rows() {
        let mut p = CropParams::default();
        p.rue = 2.75;
        p.part_table =
            PartitionTable::new(vec![(0.0, [0.5, 0.5, 0.0]), (2.0, [0.0, 0.2, 0.8])]).unwrap();
        assert_eq!(parse_params(&params_text(&p)).unwrap(), p);
        assert_eq!(parse_params("# empty\n").unwrap(), CropParams::default());
    }

    #[test]
    fn params_reject_bad_lines() {
        for bad in ["rue 3", "warp = 1", "rue = x", "rue = 1\nrue = 2", "part = 0 1 0", "rue = -1"] {
            assert!(parse_params(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn weather_round_trip_and_header_check() {
        let dir = tmp();
        let path = dir.path().join("w.csv");
        let days: Vec<WeatherDay> = (1..4)
            .map(|d| WeatherDay {
                precip: 1.5,
                ..WeatherDay::new(date(d), 10.0 + d as f64 * 0.1, 12.25)
            })
            .collect();
        write_weather(&path, &days).unwrap();
        assert_eq!(read_weather(&path).unwrap(), days);
        std::fs::write(&path, "date,tavg,rad\n2024-04-01,1,2\n").unwrap();
        assert_eq!(read_weather(&path).unwrap_err().exit_code(), 2);
        std::fs::write(&path, "date,tavg,rad,precip,dewpoint,wind\n2024-04-01,1,-2,0,0,0\n").unwrap();
        assert!(read_weather(&path).is_err());
    }

    #[test]
    fn observations_with_and_without_plot_column() {
        let dir = tmp();
        let path = dir.path().join("o.csv");
        let single = vec![ObsRecord { plot_id: None, date: date(3), lai: 1.25, lai_var: 0.09 }];
        write_observations(&path, &single).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("date,lai,lai_var\n"));
        assert_eq!(read_observations(&path).unwrap(), single);
        let multi = vec![
            ObsRecord { plot_id: Some("p1".into()), date: date(3), lai: 1.0, lai_var: 0.1 },
            ObsRecord { plot_id: Some("p2".into()), date: date(4), lai: -0.5, lai_var: 0.1 },
        ];
        write_observations(&path, &multi).unwrap();
        assert_eq!(read_observations(&path).unwrap(), multi);
        let groups = group_by_plot(&multi, |o| o.plot_id.as_deref());
        assert_eq!(groups.len(), 2);
        let s = observation_series(&groups[1].1, date(1), 10).unwrap();
        assert_eq!(s.entries()[0].time, 3);
        assert!(observation_series(&groups[1].1, date(1), 2).is_err());
    }

    #[test]
    fn raster_text_round_trips() {
        let r = Raster::new(3, 2, 0.5, vec![1.0, 2.5, -9999.0, 0.0, 4.0, 5.0], -9999.0).unwrap();
        assert_eq!(parse_raster(&raster_text(&r)).unwrap(), r);
        let with_corners = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -1\n3 4\n";
        assert_eq!(parse_raster(with_corners).unwrap().values(), &[3.0, 4.0]);
        assert!(parse_raster("ncols 2\nnrows 1\ncellsize 1\n1 2\n").is_err());
        assert!(parse_raster("ncols 2\nnrows 2\ncellsize 1\nnodata_value -1\n1 2 3\n").is_err());
    }

    #[test]
    fn vi_and_feature_tables_round_trip_with_na() {
        let dir = tmp();
        let s = BandSample::new(0.5, 0.25, 0.25, 0.3, 0.5).unwrap();
        let vi = compute_vi(&s);
        assert!(vi.values().iter().any(Option::is_none));
        let rows = vec![ViRow { plot_id: "a".into(), date: date(2), vi }];
        let path = dir.path().join("vi.csv");
        write_vi(&path, &rows).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains(",NA"));
        assert_eq!(read_vi(&path).unwrap(), rows);

        let f = FeatureRow {
            plot_id: "a".into(),
            date: date(2),
            dvd: 31,
            vi,
            cv: 0.5,
            ch: 0.25,
            lai: 1.5,
            tagp: 900.0,
            twso: 0.0,
            twlv: 400.0,
            twst: 500.0,
            twrt: 120.0,
        };
        let path = dir.path().join("f.csv");
        write_features(&path, std::slice::from_ref(&f)).unwrap();
        assert_eq!(read_features(&path).unwrap(), vec![f]);
        assert_eq!(feature_header().len(), 2 + PER_DATE_FEATURES);
    }

    #[test]
    fn model_text_round_trips() {
        let x_std = Standardizer { mean: vec![0.5, -1.0], scale: vec![2.0, 1.0] };
        let params: Vec<f64> = (0..cropcast_core::forecaster::param_count(2, 3))
            .map(|i| i as f64 * 0.1 - 0.3)
            .collect();
        let m = Predictor::from_parts(2, 3, x_std, 4000.0, 800.0, params).unwrap();
        let text = model_text(&m, DateSelector::Last(2));
        let (back, sel) = parse_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(sel, DateSelector::Last(2));
        assert_eq!(model_text(&back, sel), text);
        assert!(parse_model(&text.replace("cropcast-mlp 1", "cropcast-mlp 9")).is_err());
        assert!(parse_model(&text.replace("hidden 3", "hidden 4")).is_err());
    }

    proptest! {
        #[test]
        fn float_cells_round_trip_exactly(v in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
            prop_assert_eq!(parse_f(&fmt_f(v), "v").unwrap(), v);
        }

        #[test]
        fn paired_table_round_trips(
            pairs in prop::collection::vec((0.0..1e4f64, -1e4..1e4f64), 1..20)
        ) {
            let dir = tmp();
            let path = dir.path().join("p.csv");
            let rows: Vec<PairedRow> = pairs
                .iter()
                .enumerate()
                .map(|(i, (m, p))| PairedRow { plot_id: format!("p{i}"), measured: *m, predicted: *p })
                .collect();
            write_paired(&path, &rows).unwrap();
            prop_assert_eq!(read_paired(&path).unwrap(), rows);
        }
    }
}
