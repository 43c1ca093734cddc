//! Measured annotation times and a linear model in label density.
//!
//! Values are minutes of annotation work per minute of video. The model
//! regresses time on labels per video-minute (`60 / interval`) with an
//! intercept; estimates are comparative, not absolute.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Thumos,
    Gtea,
    Beoid,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::Thumos, Dataset::Gtea, Dataset::Beoid];
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['\'', ' ', '_'], "").as_str() {
            "thumos" | "thumos14" => Ok(Self::Thumos),
            "gtea" => Ok(Self::Gtea),
            "beoid" => Ok(Self::Beoid),
            other => Err(Error::UnknownKey(format!("dataset {other:?}"))),
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Thumos => "thumos",
            Self::Gtea => "gtea",
            Self::Beoid => "beoid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Full,
    Video,
    Point,
    /// Action-agnostic point labels every this many seconds.
    Aapl(f64),
}

/// Sampling intervals with measured times, in table order.
pub const MEASURED_INTERVALS: [f64; 4] = [3.0, 5.0, 10.0, 30.0];

impl FromStr for Scheme {
    type Err = Error;

    /// `full`, `video`, `point`, or `aapl-<seconds>[s]`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "full" => return Ok(Self::Full),
            "video" => return Ok(Self::Video),
            "point" => return Ok(Self::Point),
            _ => {}
        }
        let rest = lower
            .strip_prefix("aapl")
            .map(|r| r.trim_start_matches(['-', '_', ':']))
            .ok_or_else(|| Error::UnknownKey(format!("scheme {s:?}")))?;
        let secs: f64 = rest
            .trim_end_matches('s')
            .parse()
            .map_err(|_| Error::UnknownKey(format!("scheme {s:?}")))?;
        if !(secs > 0.0 && secs.is_finite()) {
            return Err(Error::invalid("scheme", format!("interval {secs} must be positive")));
        }
        Ok(Self::Aapl(secs))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => f.write_str("full"),
            Self::Video => f.write_str("video"),
            Self::Point => f.write_str("point"),
            Self::Aapl(s) => write!(f, "aapl-{s}s"),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Raw,
    WithSelfCheck,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "raw" => Ok(Self::Raw),
            "with_self_check" | "self_check" | "selfcheck" => Ok(Self::WithSelfCheck),
            other => Err(Error::UnknownKey(format!("variant {other:?}"))),
        }
    }
}

/// Columns: full, video, point, then the four measured intervals.
fn row(dataset: Dataset, variant: Variant) -> [f64; 7] {
    match (variant, dataset) {
        (Variant::Raw, Dataset::Beoid) => [3.72, 1.11, 2.44, 2.09, 1.43, 0.94, 0.45],
        (Variant::Raw, Dataset::Gtea) => [4.49, 0.93, 3.03, 1.98, 1.60, 1.09, 0.53],
        (Variant::Raw, Dataset::Thumos) => [1.92, 0.45, 1.10, 1.31, 0.95, 0.64, 0.36],
        (Variant::WithSelfCheck, Dataset::Thumos) => [2.994, 0.810, 1.863, 2.272, 1.648, 1.072, 0.644],
        (Variant::WithSelfCheck, Dataset::Gtea) => [6.105, 1.591, 4.594, 3.138, 2.481, 1.690, 0.855],
        (Variant::WithSelfCheck, Dataset::Beoid) => [5.205, 1.976, 3.873, 3.305, 2.312, 1.483, 0.827],
    }
}

/// A measured relative annotation time.
pub fn lookup_cost(dataset: Dataset, scheme: Scheme, variant: Variant) -> Result<f64> {
    let r = row(dataset, variant);
    let col = match scheme {
        Scheme::Full => 0,
        Scheme::Video => 1,
        Scheme::Point => 2,
        Scheme::Aapl(s) => {
            3 + MEASURED_INTERVALS
                .iter()
                .position(|&m| m == s)
                .ok_or_else(|| Error::UnknownKey(format!("no measurement for {dataset} {scheme}")))?
        }
    };
    Ok(r[col])
}

/// Measured `(interval, relative time)` rows for the interval schemes.
pub fn aapl_rows(dataset: Dataset, variant: Variant) -> Vec<(f64, f64)> {
    let r = row(dataset, variant);
    MEASURED_INTERVALS.iter().copied().zip(r[3..].iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearCostFit {
    /// Minutes per label.
    pub per_frame_cost: f64,
    /// Minutes per video-minute at zero labels.
    pub base_cost: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    /// Interval range the fit was made on.
    pub interval_range: (f64, f64),
}

impl LinearCostFit {
    pub fn predict(&self, interval: f64) -> f64 {
        self.base_cost + self.per_frame_cost * 60.0 / interval
    }
}

/// Least squares of relative time on `60 / interval`. A negative slope is
/// clamped to zero (the intercept becomes the mean).
pub fn fit_linear(rows: &[(f64, f64)]) -> Result<LinearCostFit> {
    if rows.len() < 2 {
        return Err(Error::invalid("cost rows", format!("{} rows, need at least 2", rows.len())));
    }
    if let Some((i, _)) = rows.iter().find(|(i, y)| !(*i > 0.0) || !y.is_finite()) {
        return Err(Error::invalid("cost rows", format!("interval {i} must be positive")));
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|(i, _)| 60.0 / i).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("cost rows", "all intervals are equal"));
    }
    let slope = (sxy / sxx).max(0.0);
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (intercept + slope * x)).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if sst == 0.0 { 1.0 } else { 1.0 - sse / sst };
    let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(LinearCostFit { per_frame_cost: slope, base_cost: intercept, r_squared, residuals, interval_range: (lo, hi) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CostSource {
    Table,
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub dataset: Dataset,
    pub scheme: Scheme,
    pub variant: Variant,
    pub relative_time: f64,
    pub minutes: f64,
    pub source: CostSource,
    /// Interval lies beyond twice the measured range on either side.
    pub extrapolated: bool,
}

/// Annotation minutes for `total_video_minutes` of video.
pub fn estimate(dataset: Dataset, scheme: Scheme, variant: Variant, total_video_minutes: f64) -> Result<CostEstimate> {
    if !(total_video_minutes >= 0.0 && total_video_minutes.is_finite()) {
        return Err(Error::invalid("total_video_minutes", "must be finite and non-negative"));
    }
    let (relative_time, source, extrapolated) = match lookup_cost(dataset, scheme, variant) {
        Ok(v) => (v, CostSource::Table, false),
        Err(_) => {
            let Scheme::Aapl(interval) = scheme else { unreachable!("fixed schemes are always tabulated") };
            let fit = fit_linear(&aapl_rows(dataset, variant))?;
            let (lo, hi) = fit.interval_range;
            let extrapolated = interval < lo / 2.0 || interval > hi * 2.0;
            if extrapolated {
                log::warn!("{dataset} {scheme}: interval outside twice the measured range [{lo}, {hi}] s");
            }
            (fit.predict(interval), CostSource::Fit, extrapolated)
        }
    };
    Ok(CostEstimate {
        dataset,
        scheme,
        variant,
        relative_time,
        minutes: relative_time * total_video_minutes,
        source,
        extrapolated,
    })
}

/// One point of an annotation-cost versus quality curve. The metric column is
/// left for the caller to fill in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub scheme: Scheme,
    pub relative_time: f64,
    pub metric: Option<f64>,
}

pub fn tradeoff_curve(dataset: Dataset, variant: Variant, schemes: &[Scheme]) -> Result<Vec<TradeoffPoint>> {
    schemes
        .iter()
        .map(|&scheme| {
            Ok(TradeoffPoint {
                scheme,
                relative_time: estimate(dataset, scheme, variant, 1.0)?.relative_time,
                metric: None,
            })
        })
        .collect()
}

pub fn tradeoff_csv(points: &[TradeoffPoint]) -> String {
    let mut s = String::from("scheme,relative_time,metric\n");
    for p in points {
        let metric = p.metric.map(|m| m.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", p.scheme, p.relative_time, metric));
    }
    s
}
