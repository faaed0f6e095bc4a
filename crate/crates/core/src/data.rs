//! Return panels: ingestion, price-to-return conversion, calendar windows and
//! PCA denoising.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Date-indexed matrix of per-series returns. Rows are trading days, columns
/// are series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, labels: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != labels.len() {
            return Err(Error::Shape(format!(
                "values are {}x{} but there are {} dates and {} labels",
                values.nrows(),
                values.ncols(),
                dates.len(),
                labels.len()
            )));
        }
        if let Some(w) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Format(format!(
                "dates not strictly increasing at row {} ({} then {})",
                w + 1,
                dates[w],
                dates[w + 1]
            )));
        }
        check_unique_labels(&labels)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("panel contains non-finite values".into()));
        }
        Ok(Self { dates, labels, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    /// Panel restricted to the given rows, in the given order.
    pub(crate) fn select_rows(&self, rows: &[usize]) -> ReturnPanel {
        ReturnPanel {
            dates: rows.iter().map(|&r| self.dates[r]).collect(),
            labels: self.labels.clone(),
            values: self.values.select_rows(rows.iter()),
        }
    }

    /// Writes the panel back out in the same delimited layout `load_panel` reads.
    pub fn write_delimited<W: Write>(&self, writer: W, delimiter: u8) -> Result<()> {
        let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        for (r, date) in self.dates.iter().enumerate() {
            let mut rec = vec![date.format("%Y-%m-%d").to_string()];
            rec.extend(self.values.row(r).iter().map(|v| format!("{v:e}")));
            w.write_record(&rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_unique_labels(labels: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Format(format!("duplicate series label '{l}'")));
        }
    }
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IngestConfig {
    pub delimiter: u8,
    /// Values at or below this threshold are treated as missing.
    pub missing_sentinel: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self { delimiter: b',', missing_sentinel: -99.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub panel: ReturnPanel,
    pub dropped_rows: usize,
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    if s.len() == 8 && s.bytes().all(|b| b.is_ascii_digit()) {
        NaiveDate::parse_from_str(s, "%Y%m%d").ok()
    } else {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
    }
}

/// Reads a delimited table with a header row, a date column first and one
/// column per series. Rows with any missing cell are dropped.
pub fn load_panel<R: Read>(source: R, config: &IngestConfig) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);

    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::InsufficientData("input is empty".into())),
        Some(h) => h.map_err(|e| Error::Format(e.to_string()))?,
    };
    if header.len() < 2 {
        return Err(Error::Format("header needs a date column and at least one series column".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if labels.iter().any(String::is_empty) {
        return Err(Error::Format("empty series label in header".into()));
    }
    check_unique_labels(&labels)?;
    let m = labels.len();

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    let mut dropped = 0usize;
    for (i, rec) in records.enumerate() {
        // 1-based data row index, header excluded
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse { row, msg: e.to_string() })?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != m + 1 {
            return Err(Error::Parse { row, msg: format!("expected {} fields, found {}", m + 1, rec.len()) });
        }
        let date = parse_date(&rec[0]).ok_or_else(|| Error::Parse { row, msg: format!("unparseable date '{}'", &rec[0]) })?;
        let mut values = Vec::with_capacity(m);
        let mut missing = false;
        for field in rec.iter().skip(1) {
            if field.is_empty() || field.eq_ignore_ascii_case("na") || field.eq_ignore_ascii_case("nan") {
                missing = true;
                values.push(f64::NAN);
                continue;
            }
            let v = f64::from_str(field).map_err(|_| Error::Parse { row, msg: format!("unparseable number '{field}'") })?;
            if !v.is_finite() || v <= config.missing_sentinel {
                missing = true;
            }
            values.push(v);
        }
        if missing {
            dropped += 1;
        } else {
            rows.push((date, values));
        }
    }

    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Format(format!("duplicate date {}", w[0].0)));
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!("{} usable rows, need at least 2", rows.len())));
    }
    let t = rows.len();
    let values = DMatrix::from_fn(t, m, |r, c| rows[r].1[c]);
    let dates = rows.into_iter().map(|(d, _)| d).collect();
    Ok(Ingested { panel: ReturnPanel { dates, labels, values }, dropped_rows: dropped })
}

/// Simple returns `(P[t+1] - P[t]) / P[t]`, one row shorter than the input.
pub fn prices_to_returns(prices: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(p) = prices.iter().find(|&&p| !p.is_finite() || p <= 0.0) {
        return Err(Error::Domain(format!("prices must be strictly positive, found {p}")));
    }
    if prices.nrows() < 2 {
        return Err(Error::InsufficientData("need at least two price rows".into()));
    }
    let (t, m) = prices.shape();
    Ok(DMatrix::from_fn(t - 1, m, |r, c| (prices[(r + 1, c)] - prices[(r, c)]) / prices[(r, c)]))
}

/// A calendar month, ordered chronologically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} out of range 1..=12")));
        }
        Ok(Self { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        Self { year: date.year(), month: date.month() }
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(o: i64) -> Self {
        Self { year: o.div_euclid(12) as i32, month: (o.rem_euclid(12) + 1) as u32 }
    }

    pub fn add_months(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (y, m) = match s.split_once('-') {
            Some(parts) => parts,
            None if s.len() == 6 => s.split_at(4),
            None => return Err(Error::Config(format!("expected YYYY-MM, got '{s}'"))),
        };
        let year = y.parse().map_err(|_| Error::Config(format!("bad year in '{s}'")))?;
        let month = m.parse().map_err(|_| Error::Config(format!("bad month in '{s}'")))?;
        YearMonth::new(year, month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Rolling calendar windows: window `k` covers months
/// `[start + k*step, start + k*step + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSelector {
    pub start: YearMonth,
    pub length_months: u32,
    pub step_months: u32,
}

impl WindowSelector {
    pub fn new(start: YearMonth, length_months: u32, step_months: u32) -> Result<Self> {
        if length_months == 0 || step_months == 0 {
            return Err(Error::Config("window length and step must be at least one month".into()));
        }
        Ok(Self { start, length_months, step_months })
    }

    /// Twelve-month windows shifted by one month.
    pub fn monthly(start: YearMonth) -> Self {
        Self { start, length_months: 12, step_months: 1 }
    }

    pub fn window_start(&self, index: usize) -> YearMonth {
        self.start.add_months(index as i64 * self.step_months as i64)
    }

    /// First month after the window (exclusive bound).
    pub fn window_end(&self, index: usize) -> YearMonth {
        self.window_start(index).add_months(self.length_months as i64)
    }

    pub fn midpoint(&self, index: usize) -> YearMonth {
        self.window_start(index).add_months(self.length_months as i64 / 2)
    }

    /// Number of windows lying entirely inside the calendar months spanned by
    /// the panel.
    pub fn full_window_count(&self, panel: &ReturnPanel) -> usize {
        let (Some(first), Some(last)) = (panel.dates.first(), panel.dates.last()) else {
            return 0;
        };
        if self.start < YearMonth::of(*first) {
            // windows starting before the data are not full
            let skip = self.start.months_until(YearMonth::of(*first));
            let offset = (skip + self.step_months as i64 - 1) / self.step_months as i64;
            let shifted = WindowSelector { start: self.window_start(offset as usize), ..*self };
            return shifted.full_window_count(panel);
        }
        let end_exclusive = YearMonth::of(*last).add_months(1);
        let span = self.start.months_until(end_exclusive) - self.length_months as i64;
        if span < 0 {
            0
        } else {
            (span / self.step_months as i64 + 1) as usize
        }
    }
}

#[derive(Debug, Clone)]
pub struct Window {
    pub index: usize,
    pub start: YearMonth,
    pub end: YearMonth,
    pub midpoint: YearMonth,
    pub panel: ReturnPanel,
}

pub fn slice_window(panel: &ReturnPanel, window: &WindowSelector, index: usize) -> Result<Window> {
    let start = window.window_start(index);
    let end = window.window_end(index);
    let (lo, hi) = (start.first_day(), end.first_day());
    let rows: Vec<usize> = panel.dates.iter().enumerate().filter(|(_, d)| **d >= lo && **d < hi).map(|(i, _)| i).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("no rows in window {start}..{end}")));
    }
    Ok(Window { index, start, end, midpoint: window.midpoint(index), panel: panel.select_rows(&rows) })
}

#[derive(Debug, Clone)]
pub struct Denoised {
    pub values: DMatrix<f64>,
    pub kept_components: usize,
    /// Set when the input had no variance and was returned unchanged.
    pub degenerate: bool,
}

/// Keeps the leading principal components of the centered data whose
/// cumulative eigenvalue share reaches `variance_share`, reconstructs, and
/// adds the column means back.
pub fn pca_denoise_values(values: &DMatrix<f64>, variance_share: f64) -> Result<Denoised> {
    if !(variance_share > 0.0 && variance_share <= 1.0) {
        return Err(Error::Config(format!("variance share {variance_share} outside (0, 1]")));
    }
    let (t, m) = values.shape();
    if t <= m {
        log::warn!("PCA on {t} rows for {m} series; covariance is rank deficient");
    }
    let means = column_means(values);
    let mut centered = values.clone();
    for (mut col, mean) in centered.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mean);
    }
    let denom = (t.max(2) - 1) as f64;
    let cov = (centered.transpose() * &centered) / denom;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Ok(Denoised { values: values.clone(), kept_components: 0, degenerate: true });
    }
    let target = variance_share * total;
    let mut cumulative = 0.0;
    let mut kept = m;
    for (k, ev) in eigenvalues.iter().enumerate() {
        cumulative += ev;
        // inclusive, with slack so share 1.0 keeps everything despite rounding
        if cumulative >= target * (1.0 - 1e-12) {
            kept = k + 1;
            break;
        }
    }
    if kept == m {
        return Ok(Denoised { values: values.clone(), kept_components: m, degenerate: false });
    }
    let basis = DMatrix::from_fn(m, kept, |r, c| eig.eigenvectors[(r, order[c])]);
    let mut out = (&centered * &basis) * basis.transpose();
    for (mut col, mean) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(*mean);
    }
    Ok(Denoised { values: out, kept_components: kept, degenerate: false })
}

pub fn pca_denoise(panel: &ReturnPanel, variance_share: f64) -> Result<(ReturnPanel, Denoised)> {
    let d = pca_denoise_values(&panel.values, variance_share)?;
    if d.degenerate {
        log::warn!("zero-variance panel left unchanged by PCA denoising");
    }
    let out = ReturnPanel { dates: panel.dates.clone(), labels: panel.labels.clone(), values: d.values.clone() };
    Ok((out, d))
}

pub fn column_means(values: &DMatrix<f64>) -> DVector<f64> {
    let t = values.nrows().max(1) as f64;
    DVector::from_iterator(values.ncols(), values.column_iter().map(|c| c.sum() / t))
}

/// Subtracts each column's mean in place.
pub fn center_columns(values: &mut DMatrix<f64>) {
    let means = column_means(values);
    for (mut col, mean) in values.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn normal_matrix(t: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, m, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn loads_three_rows() {
        let csv = "date,A,B\n20200102,0.1,0.2\n20200103,-0.1,0.0\n20200106,0.3,0.4\n";
        let ing = load_panel(csv.as_bytes(), &IngestConfig::default()).unwrap();
        assert_eq!(ing.panel.n_rows(), 3);
        assert_eq!(ing.panel.n_series(), 2);
        assert_eq!(ing.dropped_rows, 0);
        assert_eq!(ing.panel.dates[2], d(2020, 1, 6));
        assert_eq!(ing.panel.values[(1, 0)], -0.1);
    }

    #[test]
    fn drops_sentinel_rows() {
        let csv = "date,A,B\n2020-01-02,0.1,0.2\n2020-01-03,-99.99,0.0\n2020-01-06,0.3,0.4\n2020-01-07,0.5,0.1\n";
        let ing = load_panel(csv.as_bytes(), &IngestConfig::default()).unwrap();
        assert_eq!(ing.dropped_rows, 1);
        assert_eq!(ing.panel.n_rows(), 3);
        assert!(!ing.panel.dates.contains(&d(2020, 1, 3)));
    }

    #[test]
    fn sorts_unordered_rows() {
        let csv = "date,A,B\n20200106,3,3\n20200102,1,1\n20200103,2,2\n";
        let p = load_panel(csv.as_bytes(), &IngestConfig::default()).unwrap().panel;
        assert_eq!(p.values.column(0).as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn ingestion_errors() {
        let cfg = IngestConfig::default();
        assert!(matches!(load_panel("".as_bytes(), &cfg), Err(Error::InsufficientData(_))));
        assert!(matches!(load_panel("date\n20200101\n".as_bytes(), &cfg), Err(Error::Format(_))));
        assert!(matches!(load_panel("date,A,A\n".as_bytes(), &cfg), Err(Error::Format(_))));
        let bad_date = "date,A\n20200102,1\n2020x103,2\n";
        assert!(matches!(load_panel(bad_date.as_bytes(), &cfg), Err(Error::Parse { row: 2, .. })));
        let bad_num = "date,A\n20200102,1\n20200103,abc\n";
        assert!(matches!(load_panel(bad_num.as_bytes(), &cfg), Err(Error::Parse { row: 2, .. })));
        let one_row = "date,A\n20200102,1\n";
        assert!(matches!(load_panel(one_row.as_bytes(), &cfg), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn write_then_load_round_trips() {
        let p = ReturnPanel::new(
            vec![d(2020, 1, 2), d(2020, 1, 3)],
            vec!["A".into(), "B".into()],
            DMatrix::from_row_slice(2, 2, &[0.1, -0.25, 1e-7, 3.5]),
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_delimited(&mut buf, b';').unwrap();
        let cfg = IngestConfig { delimiter: b';', ..Default::default() };
        assert_eq!(load_panel(buf.as_slice(), &cfg).unwrap().panel, p);
    }

    #[test]
    fn returns_from_prices() {
        let prices = DMatrix::from_column_slice(3, 2, &[100.0, 110.0, 99.0, 5.0, 5.0, 5.0]);
        let r = prices_to_returns(&prices).unwrap();
        assert_eq!(r.shape(), (2, 2));
        assert!((r[(0, 0)] - 0.10).abs() < 1e-15);
        assert!((r[(1, 0)] + 0.10).abs() < 1e-15);
        assert_eq!(r.column(1).as_slice(), &[0.0, 0.0]);
        let zero = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(prices_to_returns(&zero), Err(Error::Domain(_))));
    }

    #[test]
    fn returns_reconstruct_prices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prices = DMatrix::from_fn(50, 3, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            50.0 + 10.0 * z.abs()
        });
        let r = prices_to_returns(&prices).unwrap();
        for c in 0..3 {
            let mut p = 1.0;
            for t in 0..r.nrows() {
                p *= 1.0 + r[(t, c)];
                let expected = prices[(t + 1, c)] / prices[(0, c)];
                assert!((p - expected).abs() < 1e-10 * expected);
            }
        }
    }

    fn daily_panel(from: NaiveDate, to: NaiveDate) -> ReturnPanel {
        let dates: Vec<NaiveDate> = from.iter_days().take_while(|x| *x <= to).collect();
        let n = dates.len();
        ReturnPanel::new(dates, vec!["A".into(), "B".into()], DMatrix::from_fn(n, 2, |r, c| (r + c) as f64)).unwrap()
    }

    #[test]
    fn first_window_is_first_twelve_months() {
        let p = daily_panel(d(2019, 1, 1), d(2020, 12, 31));
        let sel = WindowSelector::monthly(YearMonth::new(2019, 1).unwrap());
        let w = slice_window(&p, &sel, 0).unwrap();
        assert_eq!(w.panel.dates.first(), Some(&d(2019, 1, 1)));
        assert_eq!(w.panel.dates.last(), Some(&d(2019, 12, 31)));
        assert_eq!(w.midpoint.to_string(), "2019-07");
        assert_eq!(sel.full_window_count(&p), 13);
        assert!(matches!(slice_window(&p, &sel, 40), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn three_years_give_twenty_five_windows() {
        // Jan 2019 .. Dec 2021 holds 36 months; 12-month windows at 1-month
        // steps start Jan 2019 .. Jan 2021.
        let p = daily_panel(d(2019, 1, 1), d(2021, 12, 31));
        let sel = WindowSelector::monthly(YearMonth::new(2019, 1).unwrap());
        let n = sel.full_window_count(&p);
        let mut enumerated = 0;
        let mut s = YearMonth::new(2019, 1).unwrap();
        while s.add_months(12) <= YearMonth::new(2022, 1).unwrap() {
            enumerated += 1;
            s = s.add_months(1);
        }
        assert_eq!(n, enumerated);
        assert_eq!(n, 25);
        assert_eq!(sel.midpoint(0).to_string(), "2019-07");
        assert_eq!(sel.midpoint(n - 1).to_string(), "2021-07");
    }

    #[test]
    fn windows_cover_scan_range() {
        let p = daily_panel(d(2019, 3, 5), d(2021, 2, 10));
        let sel = WindowSelector::new(YearMonth::new(2019, 3).unwrap(), 5, 3).unwrap();
        let n = sel.full_window_count(&p);
        let mut covered = std::collections::BTreeSet::new();
        for k in 0..n {
            let w = slice_window(&p, &sel, k).unwrap();
            covered.extend(w.panel.dates.iter().copied());
            if k > 0 {
                let prev = slice_window(&p, &sel, k - 1).unwrap();
                // consecutive windows overlap by length - step months
                let overlap = prev.panel.dates.iter().filter(|x| w.panel.dates.contains(x)).count();
                assert!(overlap > 0);
            }
        }
        let scan_end = sel.window_end(n - 1).first_day();
        let expected: Vec<_> = p.dates.iter().filter(|x| **x < scan_end).copied().collect();
        assert_eq!(covered.into_iter().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn year_month_parsing() {
        assert_eq!("2020-03".parse::<YearMonth>().unwrap(), YearMonth::new(2020, 3).unwrap());
        assert_eq!("202011".parse::<YearMonth>().unwrap(), YearMonth::new(2020, 11).unwrap());
        assert!("2020-13".parse::<YearMonth>().is_err());
        assert_eq!(YearMonth::new(2019, 12).unwrap().add_months(1).to_string(), "2020-01");
    }

    #[test]
    fn pca_rank_one_is_exact() {
        let base = normal_matrix(100, 1, 1);
        let scales = [1.0, -2.0, 0.5, 3.0];
        let x = DMatrix::from_fn(100, 4, |r, c| base[(r, 0)] * scales[c] + c as f64);
        let out = pca_denoise_values(&x, 0.9).unwrap();
        assert_eq!(out.kept_components, 1);
        assert!((&out.values - &x).amax() < 1e-10);
    }

    #[test]
    fn pca_full_share_is_identity() {
        let x = normal_matrix(60, 5, 2);
        let out = pca_denoise_values(&x, 1.0).unwrap();
        assert_eq!(out.kept_components, 5);
        assert!((&out.values - &x).amax() < 1e-10);
    }

    #[test]
    fn pca_preserves_means() {
        let mut x = normal_matrix(80, 6, 3);
        for (c, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(c as f64 * 0.3);
        }
        let out = pca_denoise_values(&x, 0.7).unwrap();
        assert!(out.kept_components < 6);
        assert!((column_means(&out.values) - column_means(&x)).amax() < 1e-10);
    }

    #[test]
    fn pca_degenerate_panel_unchanged() {
        let x = DMatrix::from_element(10, 3, 0.25);
        let out = pca_denoise_values(&x, 0.9).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.values, x);
    }

    #[test]
    fn pca_kept_components_for_noise() {
        // Monte Carlo over 20 seeds: i.i.d. N(0,1), m=49, T=250.
        let kept: Vec<usize> =
            (0..20).map(|s| pca_denoise_values(&normal_matrix(250, 49, 100 + s), 0.9).unwrap().kept_components).collect();
        for k in kept {
            assert!((35..=49).contains(&k), "kept {k}");
        }
    }

    #[test]
    fn pca_idempotent_on_low_rank_signal() {
        // rank-3 signal plus tiny noise: the retained subspace is separated by a
        // large spectral gap, so a second pass keeps the same components.
        let f = normal_matrix(200, 3, 9);
        let load = normal_matrix(3, 8, 10);
        let noise = normal_matrix(200, 8, 11) * 1e-3;
        let x = &f * &load + noise;
        let once = pca_denoise_values(&x, 0.9).unwrap();
        let twice = pca_denoise_values(&once.values, 0.9).unwrap();
        assert_eq!(once.kept_components, twice.kept_components);
        assert!((&once.values - &twice.values).amax() < 1e-8);
    }

    #[test]
    fn rejects_bad_share() {
        let x = normal_matrix(10, 2, 1);
        assert!(matches!(pca_denoise_values(&x, 0.0), Err(Error::Config(_))));
        assert!(matches!(pca_denoise_values(&x, 1.5), Err(Error::Config(_))));
    }
}
