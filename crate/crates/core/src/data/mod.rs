//! Sensor series, overlapping windows, scaling, synthetic signals and CSV
//! I/O.

mod csv_io;
mod scaler;
mod synth;

use std::fmt;
use std::str::FromStr;

pub use csv_io::{read_csv, read_windows_csv, write_csv, write_series_csv};
pub use scaler::{fit_scaler, Scaler};
pub use synth::{synth_series, RegimeParams, SegmentSpec, SynthProfile};

use crate::error::{Error, Result};
use crate::ndcore::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
            Label::Unlabeled => "unlabeled",
        }
    }

    /// `true` for the positive (abnormal) class.
    pub fn is_positive(self) -> bool {
        self == Label::Abnormal
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Half-open index range `[start, end)` carrying one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: Label,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// A multi-channel signal with labeled segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    channels: usize,
    /// Row-major `len x channels`.
    values: Vec<f64>,
    pub sample_rate: f64,
    segments: Vec<Segment>,
}

impl SensorSeries {
    pub fn new(channels: usize, values: Vec<f64>, sample_rate: f64, segments: Vec<Segment>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::config("series needs at least one channel"));
        }
        if !values.len().is_multiple_of(channels) {
            return Err(Error::contract(format!(
                "{} values do not divide into {channels} channels",
                values.len()
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::config(format!("sample rate must be positive, got {sample_rate}")));
        }
        let len = values.len() / channels;
        let mut sorted = segments.clone();
        sorted.sort_by_key(|s| s.start);
        for s in &sorted {
            if s.start >= s.end || s.end > len {
                return Err(Error::config(format!(
                    "segment [{}, {}) outside series of length {len}",
                    s.start, s.end
                )));
            }
        }
        for pair in sorted.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::config(format!(
                    "segments [{}, {}) and [{}, {}) overlap",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(SensorSeries {
            channels,
            values,
            sample_rate,
            segments: sorted,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sample(&self, t: usize) -> &[f64] {
        &self.values[t * self.channels..(t + 1) * self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Label at index `t`; indices outside every segment are unlabeled.
    pub fn label_at(&self, t: usize) -> Label {
        self.segments
            .iter()
            .find(|s| s.start <= t && t < s.end)
            .map_or(Label::Unlabeled, |s| s.label)
    }

    /// Values of channel `c`.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.sample(t)[c]).collect()
    }
}

/// A stack of `n x v` windows with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    n: usize,
    v: usize,
    /// Row-major `count x (n * v)`; each row is a window flattened time-major.
    data: Vec<f64>,
    labels: Vec<Label>,
    origins: Vec<usize>,
    scaler: Option<Scaler>,
    warnings: Vec<String>,
}

impl WindowSet {
    pub fn empty(n: usize, v: usize) -> Self {
        WindowSet {
            n,
            v,
            data: Vec::new(),
            labels: Vec::new(),
            origins: Vec::new(),
            scaler: None,
            warnings: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn width(&self) -> usize {
        self.n * self.v
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    /// Start index of window `i` in its source series; `usize::MAX` for
    /// synthetic windows.
    pub fn origin(&self, i: usize) -> usize {
        self.origins[i]
    }

    pub fn scaler(&self) -> Option<&Scaler> {
        self.scaler.as_ref()
    }

    pub fn set_scaler(&mut self, scaler: Option<Scaler>) {
        self.scaler = scaler;
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Flattened window `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.width().max(1)).take(self.len())
    }

    /// Window `i` as an `n x v` tensor.
    pub fn window(&self, i: usize) -> Tensor {
        Tensor::from_vec(self.n, self.v, self.row(i).to_vec()).expect("window width")
    }

    /// All windows as a `count x (n * v)` tensor.
    pub fn as_matrix(&self) -> Tensor {
        Tensor::from_vec(self.len(), self.width(), self.data.clone()).expect("window matrix")
    }

    pub fn push(&mut self, window: &[f64], label: Label, origin: usize) -> Result<()> {
        if window.len() != self.width() {
            return Err(Error::shape("WindowSet::push", (1, self.width()), (1, window.len())));
        }
        self.data.extend_from_slice(window);
        self.labels.push(label);
        self.origins.push(origin);
        Ok(())
    }

    /// Appends every window of `other`; both sets must share `n` and `v`.
    pub fn extend(&mut self, other: &WindowSet) -> Result<()> {
        if (other.n, other.v) != (self.n, self.v) {
            return Err(Error::shape("WindowSet::extend", (self.n, self.v), (other.n, other.v)));
        }
        self.data.extend_from_slice(&other.data);
        self.labels.extend_from_slice(&other.labels);
        self.origins.extend_from_slice(&other.origins);
        Ok(())
    }

    /// Windows at `indices`, in that order. Keeps the scaler.
    pub fn subset(&self, indices: &[usize]) -> WindowSet {
        let mut out = WindowSet::empty(self.n, self.v);
        out.scaler = self.scaler.clone();
        for &i in indices {
            out.data.extend_from_slice(self.row(i));
            out.labels.push(self.labels[i]);
            out.origins.push(self.origins[i]);
        }
        out
    }

    pub fn with_label(&self, label: Label) -> WindowSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        self.subset(&idx)
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Every entry inside `[0, 1]`.
    pub fn is_unit_scaled(&self) -> bool {
        self.data.iter().all(|&x| (0.0..=1.0).contains(&x))
    }

    pub fn relabel(&mut self, label: Label) {
        self.labels.iter_mut().for_each(|l| *l = label);
    }
}

/// Cuts every labeled segment of `series` into overlapping windows of
/// length `n`, advancing by `n - overlap`. Windows never cross a segment
/// boundary; unlabeled stretches are skipped.
pub fn window(series: &SensorSeries, n: usize, overlap: usize) -> Result<WindowSet> {
    if n == 0 {
        return Err(Error::config("window length must be positive"));
    }
    if overlap >= n {
        return Err(Error::config(format!("overlap {overlap} must be smaller than window length {n}")));
    }
    let stride = n - overlap;
    let v = series.channels();
    let mut out = WindowSet::empty(n, v);
    for seg in series.segments() {
        if seg.label == Label::Unlabeled {
            continue;
        }
        if seg.len() < n {
            let msg = format!(
                "segment [{}, {}) ({}) shorter than window length {n}; no windows emitted",
                seg.start, seg.end, seg.label
            );
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        let count = (seg.len() - n) / stride + 1;
        for k in 0..count {
            let start = seg.start + k * stride;
            let w = &series.values()[start * v..(start + n) * v];
            out.push(w, seg.label, start)?;
        }
    }
    Ok(out)
}

/// Closed-form window count for one segment.
pub fn window_count(segment_len: usize, n: usize, overlap: usize) -> usize {
    if segment_len < n || overlap >= n {
        0
    } else {
        (segment_len - n) / (n - overlap) + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize, segments: Vec<Segment>) -> SensorSeries {
        SensorSeries::new(1, (0..len).map(|i| i as f64).collect(), 1.0, segments).unwrap()
    }

    fn seg(start: usize, end: usize, label: Label) -> Segment {
        Segment { start, end, label }
    }

    #[test]
    fn segment_of_exact_window_length() {
        let s = ramp(30, vec![seg(0, 30, Label::Normal)]);
        assert_eq!(window(&s, 30, 28).unwrap().len(), 1);
    }

    #[test]
    fn ninety_samples_stride_two() {
        let s = ramp(90, vec![seg(0, 90, Label::Abnormal)]);
        let ws = window(&s, 30, 28).unwrap();
        assert_eq!(ws.len(), 31);
        assert_eq!(ws.origin(30), 60);
        assert_eq!(ws.row(1)[0], 2.0);
    }

    #[test]
    fn windows_stay_inside_their_segment() {
        let s = ramp(
            200,
            vec![seg(0, 70, Label::Normal), seg(70, 100, Label::Unlabeled), seg(100, 187, Label::Abnormal)],
        );
        let ws = window(&s, 10, 3).unwrap();
        for i in 0..ws.len() {
            let start = ws.origin(i);
            let lab = s.label_at(start);
            assert_eq!(ws.label(i), lab);
            assert_eq!(s.label_at(start + 9), lab);
        }
        assert_eq!(ws.count(Label::Normal), window_count(70, 10, 3));
        assert_eq!(ws.count(Label::Abnormal), window_count(87, 10, 3));
    }

    #[test]
    fn short_segment_warns() {
        let s = ramp(50, vec![seg(0, 20, Label::Normal), seg(20, 50, Label::Abnormal)]);
        let ws = window(&s, 25, 0).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws.warnings().len(), 1);
    }

    #[test]
    fn overlap_not_smaller_than_n_is_config_error() {
        let s = ramp(50, vec![seg(0, 50, Label::Normal)]);
        assert!(matches!(window(&s, 10, 10), Err(Error::Config(_))));
    }

    #[test]
    fn overlapping_segments_rejected() {
        let r = SensorSeries::new(1, vec![0.0; 10], 1.0, vec![seg(0, 6, Label::Normal), seg(5, 9, Label::Abnormal)]);
        assert!(r.is_err());
    }

    #[test]
    fn multichannel_windows_are_time_major() {
        let values: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let s = SensorSeries::new(2, values, 1.0, vec![seg(0, 6, Label::Normal)]).unwrap();
        let ws = window(&s, 3, 1).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws.row(1), &[4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        assert_eq!(ws.window(1).shape(), (3, 2));
    }
}
