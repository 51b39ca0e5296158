use serde::{Deserialize, Serialize};

use super::PhtError;

pub const MINUTE: f64 = 60.0;
pub const HOUR: f64 = 3600.0;
pub const DAY: f64 = 86_400.0;
/// Months are fixed at 30 days.
pub const MONTH: f64 = 30.0 * DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBin {
    pub label: String,
    pub lower: f64,
    /// Written as `null` when unbounded.
    #[serde(with = "unbounded")]
    pub upper: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LadderFields")]
pub struct IntervalLadder {
    bins: Vec<IntervalBin>,
    emit_threshold: f64,
    long_gap_cap: usize,
}

#[derive(Deserialize)]
struct LadderFields {
    bins: Vec<IntervalBin>,
    emit_threshold: f64,
    long_gap_cap: usize,
}

impl TryFrom<LadderFields> for IntervalLadder {
    type Error = PhtError;

    fn try_from(f: LadderFields) -> Result<Self, PhtError> {
        IntervalLadder::new(f.bins, Some(f.emit_threshold), f.long_gap_cap)
    }
}

impl Default for IntervalLadder {
    fn default() -> Self {
        let edges: [(&str, f64); 19] = [
            ("5m-15m", 5.0 * MINUTE),
            ("15m-45m", 15.0 * MINUTE),
            ("45m-1h15m", 45.0 * MINUTE),
            ("1h15m-2h", 75.0 * MINUTE),
            ("2h-3h", 2.0 * HOUR),
            ("3h-5h", 3.0 * HOUR),
            ("5h-8h", 5.0 * HOUR),
            ("8h-12h", 8.0 * HOUR),
            ("12h-18h", 12.0 * HOUR),
            ("18h-1d", 18.0 * HOUR),
            ("1d-2d", DAY),
            ("2d-4d", 2.0 * DAY),
            ("4d-7d", 4.0 * DAY),
            ("7d-12d", 7.0 * DAY),
            ("12d-20d", 12.0 * DAY),
            ("20d-30d", 20.0 * DAY),
            ("30d-2mt", 30.0 * DAY),
            ("2mt-6mt", 2.0 * MONTH),
            ("=6mt", 6.0 * MONTH),
        ];
        let bins = edges
            .iter()
            .enumerate()
            .map(|(i, &(label, lower))| IntervalBin {
                label: label.to_string(),
                lower,
                upper: edges.get(i + 1).map_or(f64::INFINITY, |e| e.1),
            })
            .collect();
        Self::new(bins, None, 4).expect("default ladder is valid")
    }
}

impl IntervalLadder {
    /// `emit_threshold` defaults to half the first bin's lower bound.
    pub fn new(
        bins: Vec<IntervalBin>,
        emit_threshold: Option<f64>,
        long_gap_cap: usize,
    ) -> Result<Self, PhtError> {
        let bad = |m: &str| Err(PhtError::InvalidLadder(m.to_string()));
        let (Some(first), Some(last)) = (bins.first(), bins.last()) else {
            return bad("no bins");
        };
        if !(first.lower > 0.0 && first.lower.is_finite()) {
            return bad("first lower bound must be positive and finite");
        }
        if last.upper != f64::INFINITY {
            return bad("last upper bound must be infinite");
        }
        for (i, b) in bins.iter().enumerate() {
            if !(b.lower < b.upper) {
                return bad(&format!("bin `{}` has lower >= upper", b.label));
            }
            if let Some(next) = bins.get(i + 1) {
                if b.upper != next.lower {
                    return bad(&format!("bins `{}` and `{}` are not contiguous", b.label, next.label));
                }
            }
            if bins[..i].iter().any(|o| o.label == b.label) {
                return bad(&format!("duplicate label `{}`", b.label));
            }
        }
        if long_gap_cap == 0 {
            return bad("long-gap cap must be at least 1");
        }
        let emit_threshold = emit_threshold.unwrap_or(first.lower / 2.0);
        if !(emit_threshold >= 0.0 && emit_threshold <= first.lower) {
            return bad("emit threshold must lie in [0, first lower bound]");
        }
        Ok(Self { bins, emit_threshold, long_gap_cap })
    }

    pub fn bins(&self) -> &[IntervalBin] {
        &self.bins
    }

    pub fn emit_threshold(&self) -> f64 {
        self.emit_threshold
    }

    pub fn long_gap_cap(&self) -> usize {
        self.long_gap_cap
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.bins.iter().map(|b| b.label.as_str())
    }

    pub fn top_label(&self) -> &str {
        &self.bins[self.bins.len() - 1].label
    }

    /// Bin index for a gap, or `None` when the gap is below the emit
    /// threshold. Gaps between the threshold and the first lower bound fall
    /// in the first bin.
    pub fn bin_index(&self, gap: f64) -> Result<Option<usize>, PhtError> {
        if !(gap >= 0.0) {
            return Err(PhtError::NegativeGap(gap));
        }
        if gap < self.emit_threshold {
            return Ok(None);
        }
        let i = self.bins.partition_point(|b| b.upper <= gap);
        Ok(Some(i.min(self.bins.len() - 1)))
    }

    pub fn tokens(&self, gap: f64) -> Result<Vec<&str>, PhtError> {
        let Some(i) = self.bin_index(gap)? else {
            return Ok(Vec::new());
        };
        if i + 1 < self.bins.len() {
            return Ok(vec![self.bins[i].label.as_str()]);
        }
        let top = &self.bins[i];
        let r = ((gap / top.lower).floor() as usize).clamp(1, self.long_gap_cap);
        Ok(vec![top.label.as_str(); r])
    }
}
