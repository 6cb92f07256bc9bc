//! Rendering glyphs onto the synthetic retina under controlled
//! translation, scale and rotation, and assembling trial sets.
//!
//! Coordinates are `(row, col)` with rows increasing downward. A positive
//! `y` offset moves the glyph down, a positive `x` offset moves it right and
//! a positive rotation turns it counter-clockwise as displayed.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::glyphs::NovelKind;
use crate::seeded_rng;

/// One of the four generative stimulus properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Property {
    X,
    Y,
    S,
    R,
}

impl Property {
    pub const ALL: [Property; 4] = [Property::X, Property::Y, Property::S, Property::R];

    pub fn tag(self) -> &'static str {
        match self {
            Property::X => "x",
            Property::Y => "y",
            Property::S => "s",
            Property::R => "r",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Property {
    type Err = RrnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" => Ok(Property::X),
            "y" => Ok(Property::Y),
            "s" => Ok(Property::S),
            "r" => Ok(Property::R),
            other => Err(RrnError::Argument(format!("unknown property tag `{other}`"))),
        }
    }
}

/// Which coordinate a trial set varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Swept {
    Property(Property),
    None,
}

impl FromStr for Swept {
    type Err = RrnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Swept::None),
            other => other.parse().map(Swept::Property),
        }
    }
}

/// What a stimulus depicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Identity {
    Digit(u8),
    Novel(NovelKind),
}

impl Identity {
    pub fn digit(self) -> Option<u8> {
        match self {
            Identity::Digit(d) => Some(d),
            Identity::Novel(_) => None,
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Identity::Digit(d) => write!(f, "{d}"),
            Identity::Novel(k) => write!(f, "{k}"),
        }
    }
}

/// Placement of a glyph on the retina.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusProps {
    /// Horizontal offset as a fraction of retina width.
    pub x: f64,
    /// Vertical offset as a fraction of retina height.
    pub y: f64,
    /// Scale multiplier.
    pub s: f64,
    /// In-plane rotation in degrees.
    pub r: f64,
    pub identity: Identity,
}

impl StimulusProps {
    /// Centered, unscaled, unrotated.
    pub fn canonical(identity: Identity) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            s: 1.0,
            r: 0.0,
            identity,
        }
    }

    pub fn get(&self, p: Property) -> f64 {
        match p {
            Property::X => self.x,
            Property::Y => self.y,
            Property::S => self.s,
            Property::R => self.r,
        }
    }

    pub fn set(&mut self, p: Property, value: f64) {
        match p {
            Property::X => self.x = value,
            Property::Y => self.y = value,
            Property::S => self.s = value,
            Property::R => self.r = value,
        }
    }

    pub fn with(mut self, p: Property, value: f64) -> Self {
        self.set(p, value);
        self
    }
}

/// Inclusive sampling range per property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropertyRanges {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub s: (f64, f64),
    pub r: (f64, f64),
}

impl Default for PropertyRanges {
    fn default() -> Self {
        Self {
            x: (-0.2, 0.2),
            y: (-0.2, 0.2),
            s: (0.7, 1.3),
            r: (-45.0, 45.0),
        }
    }
}

impl PropertyRanges {
    pub fn get(&self, p: Property) -> (f64, f64) {
        match p {
            Property::X => self.x,
            Property::Y => self.y,
            Property::S => self.s,
            Property::R => self.r,
        }
    }

    pub fn set(&mut self, p: Property, range: (f64, f64)) {
        match p {
            Property::X => self.x = range,
            Property::Y => self.y = range,
            Property::S => self.s = range,
            Property::R => self.r = range,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in Property::ALL {
            let (lo, hi) = self.get(p);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(RrnError::Argument(format!("range for {p} is not ordered: [{lo}, {hi}]")));
            }
        }
        if self.x.0 < -0.2 || self.x.1 > 0.2 || self.y.0 < -0.2 || self.y.1 > 0.2 {
            return Err(RrnError::Argument("x and y ranges must lie within [-0.2, 0.2]".into()));
        }
        if self.s.0 <= 0.0 {
            return Err(RrnError::Argument("scale range must be strictly positive".into()));
        }
        if self.r.0 < -180.0 || self.r.1 > 180.0 {
            return Err(RrnError::Argument("rotation range must lie within [-180, 180]".into()));
        }
        Ok(())
    }

    pub fn contains(&self, props: &StimulusProps) -> bool {
        Property::ALL.iter().all(|&p| {
            let (lo, hi) = self.get(p);
            let v = props.get(p);
            v >= lo - 1e-12 && v <= hi + 1e-12
        })
    }

    /// Draw all four properties independently and uniformly.
    pub fn sample<R: Rng>(&self, rng: &mut R, identity: Identity) -> StimulusProps {
        let mut props = StimulusProps::canonical(identity);
        for p in Property::ALL {
            props.set(p, uniform(rng, self.get(p)));
        }
        props
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Retina geometry shared by every stimulus of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetinaConfig {
    /// Retina side length W in pixels.
    pub width: usize,
    /// Retina pixels per glyph pixel at `s = 1`.
    pub glyph_scale: f64,
    pub ranges: PropertyRanges,
}

impl RetinaConfig {
    /// 64x64 retina, glyphs drawn at native resolution.
    pub fn standard() -> Self {
        Self {
            width: 64,
            glyph_scale: 1.0,
            ranges: PropertyRanges::default(),
        }
    }

    /// 32x32 retina with glyphs at half resolution: the same geometry as
    /// [`RetinaConfig::standard`] at a quarter of the pixel count.
    pub fn desk() -> Self {
        Self {
            width: 32,
            glyph_scale: 0.5,
            ranges: PropertyRanges::default(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(RrnError::Argument("retina width must be positive".into()));
        }
        if !(self.glyph_scale > 0.0 && self.glyph_scale.is_finite()) {
            return Err(RrnError::Argument("glyph scale must be positive".into()));
        }
        self.ranges.validate()
    }
}

/// A W x W grid of intensities in `[0, 1]` with the props that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinaImage {
    pub pixels: Array2<f64>,
    pub props: StimulusProps,
}

impl RetinaImage {
    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.pixels
            .as_slice()
            .expect("retina images are stored in standard layout")
    }
}

/// Bilinear sample with zero padding outside the grid.
#[inline]
pub(crate) fn sample_bilinear(src: &ArrayView2<f64>, row: f64, col: f64) -> f64 {
    let (h, w) = src.dim();
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let r0 = r0 as isize;
    let c0 = c0 as isize;
    let at = |r: isize, c: isize| -> f64 {
        if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
            src[[r as usize, c as usize]]
        } else {
            0.0
        }
    };
    let top = at(r0, c0) * (1.0 - fc) + at(r0, c0 + 1) * fc;
    let bottom = at(r0 + 1, c0) * (1.0 - fc) + at(r0 + 1, c0 + 1) * fc;
    top * (1.0 - fr) + bottom * fr
}

/// Place `glyph` on the retina: scale by `s`, rotate by `r` about the glyph
/// box center, then center it at retina center + `(x W, y W)`.
///
/// Inverse-mapped bilinear resampling; samples outside the glyph read 0.
pub fn render_stimulus(glyph: ArrayView2<f64>, props: StimulusProps, cfg: &RetinaConfig) -> Result<RetinaImage> {
    if !cfg.ranges.contains(&props) {
        return Err(RrnError::Argument(format!(
            "props (x={}, y={}, s={}, r={}) outside configured ranges",
            props.x, props.y, props.s, props.r
        )));
    }
    let (h0, w0) = glyph.dim();
    let k = props.s * cfg.glyph_scale;
    let extent = h0.max(w0) as f64 * k;
    let w = cfg.width;
    if extent > w as f64 {
        return Err(RrnError::Render(format!(
            "glyph of {h0}x{w0} at scale {k:.3} spans {extent:.1} px, larger than the {w}-px retina"
        )));
    }

    let src_cr = (h0 as f64 - 1.0) / 2.0;
    let src_cc = (w0 as f64 - 1.0) / 2.0;
    let out_cr = (w as f64 - 1.0) / 2.0 + props.y * w as f64;
    let out_cc = (w as f64 - 1.0) / 2.0 + props.x * w as f64;
    let (sin, cos) = props.r.to_radians().sin_cos();

    let mut pixels = Array2::zeros((w, w));
    for ((row, col), px) in pixels.indexed_iter_mut() {
        let dv = (row as f64 - out_cr) / k;
        let du = (col as f64 - out_cc) / k;
        // inverse of the counter-clockwise display rotation
        let su = cos * du - sin * dv;
        let sv = sin * du + cos * dv;
        let v = sample_bilinear(&glyph, src_cr + sv, src_cc + su);
        *px = v.clamp(0.0, 1.0);
    }
    Ok(RetinaImage { pixels, props })
}

/// Ordered stimuli with the swept coordinate recorded per trial.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub stimuli: Vec<RetinaImage>,
    pub swept: Swept,
    pub property_values: Vec<f64>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.stimuli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stimuli.is_empty()
    }

    /// Digit labels of the stimuli (novel shapes map to `None`).
    pub fn digits(&self) -> Vec<Option<u8>> {
        self.stimuli.iter().map(|s| s.props.identity.digit()).collect()
    }

    /// Rebuild from explicit stimuli; values are re-derived from props.
    pub fn from_stimuli(stimuli: Vec<RetinaImage>, swept: Swept) -> Self {
        let property_values = stimuli
            .iter()
            .map(|s| match swept {
                Swept::Property(p) => s.props.get(p),
                Swept::None => 0.0,
            })
            .collect();
        Self {
            stimuli,
            swept,
            property_values,
        }
    }
}

/// How to draw a trial set.
#[derive(Debug, Clone, Copy)]
pub struct TrialSpec {
    pub swept: Swept,
    pub n_trials: usize,
    /// Values held for every non-swept property (identity is ignored).
    pub fixed: StimulusProps,
    /// Use this corpus index for every trial instead of a random instance.
    pub pinned_index: Option<usize>,
    pub seed: u64,
}

impl TrialSpec {
    pub fn new(swept: Swept, n_trials: usize, seed: u64) -> Self {
        Self {
            swept,
            n_trials,
            fixed: StimulusProps::canonical(Identity::Digit(0)),
            pinned_index: None,
            seed,
        }
    }
}

/// Draw `n_trials` stimuli, sweeping one property uniformly over its range
/// and holding the rest at `spec.fixed`.
pub fn sample_trial_set(corpus: &DigitCorpus, spec: &TrialSpec, cfg: &RetinaConfig) -> Result<TrialSet> {
    if spec.n_trials < 2 {
        return Err(RrnError::Argument(format!(
            "a trial set needs at least 2 trials, got {}",
            spec.n_trials
        )));
    }
    if corpus.is_empty() {
        return Err(RrnError::Argument("cannot sample trials from an empty corpus".into()));
    }
    if let Some(i) = spec.pinned_index {
        if i >= corpus.len() {
            return Err(RrnError::Argument(format!("pinned index {i} out of range")));
        }
    }
    let mut rng = seeded_rng(spec.seed);
    let mut stimuli = Vec::with_capacity(spec.n_trials);
    let mut values = Vec::with_capacity(spec.n_trials);
    for _ in 0..spec.n_trials {
        let index = spec
            .pinned_index
            .unwrap_or_else(|| rng.random_range(0..corpus.len()));
        let mut props = spec.fixed;
        props.identity = Identity::Digit(corpus.label(index));
        let value = match spec.swept {
            Swept::Property(p) => {
                let v = uniform(&mut rng, cfg.ranges.get(p));
                props.set(p, v);
                v
            }
            Swept::None => 0.0,
        };
        stimuli.push(render_stimulus(corpus.image(index).view(), props, cfg)?);
        values.push(value);
    }
    Ok(TrialSet {
        stimuli,
        swept: spec.swept,
        property_values: values,
    })
}

/// Intensity-weighted mean `(col, row)` of a grid, `None` when empty.
pub(crate) fn weighted_centroid(img: &ArrayView2<f64>) -> Option<(f64, f64)> {
    let mut total = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for ((r, c), &v) in img.indexed_iter() {
        total += v;
        sx += v * c as f64;
        sy += v * r as f64;
    }
    (total > 0.0).then(|| (sx / total, sy / total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_glyph(size: usize) -> Array2<f64> {
        let mut g = Array2::zeros((size, size));
        g[[size / 2, size / 2]] = 1.0;
        g
    }

    fn blob(size: usize) -> Array2<f64> {
        // point-symmetric about the box center
        let c = (size as f64 - 1.0) / 2.0;
        Array2::from_shape_fn((size, size), |(r, col)| {
            let d2 = (r as f64 - c).powi(2) + 0.5 * (col as f64 - c).powi(2);
            (-d2 / 18.0).exp()
        })
    }

    fn bar_glyph() -> Array2<f64> {
        let mut g = Array2::zeros((28, 28));
        for r in 6..22 {
            for c in 10..18 {
                g[[r, c]] = 1.0;
            }
        }
        g
    }

    #[test]
    fn identity_transform_centers_the_glyph() {
        let cfg = RetinaConfig::standard();
        let img = render_stimulus(blob(27).view(), StimulusProps::canonical(Identity::Digit(0)), &cfg).unwrap();
        let (cx, cy) = weighted_centroid(&img.pixels.view()).unwrap();
        let c = (cfg.width as f64 - 1.0) / 2.0;
        assert!((cx - c).abs() <= 0.5 && (cy - c).abs() <= 0.5, "({cx}, {cy})");
    }

    #[test]
    fn x_offset_places_a_point_at_the_closed_form_column() {
        let cfg = RetinaConfig::standard();
        let props = StimulusProps::canonical(Identity::Digit(1)).with(Property::X, 0.2);
        let img = render_stimulus(point_glyph(5).view(), props, &cfg).unwrap();
        let expected_col = (cfg.width as f64 - 1.0) / 2.0 + 0.2 * cfg.width as f64;
        // brute-force scan for the brightest pixel
        let mut best = (0, 0, -1.0);
        for ((r, c), &v) in img.pixels.indexed_iter() {
            if v > best.2 {
                best = (r, c, v);
            }
        }
        assert!((best.1 as f64 - expected_col).abs() <= 0.5, "col {} vs {expected_col}", best.1);
        assert_eq!(best.0 as f64, ((cfg.width as f64 - 1.0) / 2.0).floor());
        let (cx, _) = weighted_centroid(&img.pixels.view()).unwrap();
        assert!((cx - expected_col).abs() < 1e-9);
    }

    #[test]
    fn half_turn_of_point_symmetric_blob_is_invariant() {
        let mut cfg = RetinaConfig::standard();
        cfg.ranges.r = (-180.0, 180.0);
        let g = blob(21);
        let a = render_stimulus(g.view(), StimulusProps::canonical(Identity::Digit(0)), &cfg).unwrap();
        let b = render_stimulus(
            g.view(),
            StimulusProps::canonical(Identity::Digit(0)).with(Property::R, 180.0),
            &cfg,
        )
        .unwrap();
        let max = a
            .pixels
            .iter()
            .zip(b.pixels.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-6, "max diff {max}");
    }

    #[test]
    fn oversized_glyph_is_a_render_error() {
        let mut cfg = RetinaConfig::desk();
        cfg.ranges.s = (0.5, 3.0);
        let props = StimulusProps::canonical(Identity::Digit(0)).with(Property::S, 3.0);
        let err = render_stimulus(bar_glyph().view(), props, &cfg).unwrap_err();
        assert!(matches!(err, RrnError::Render(_)));
    }

    #[test]
    fn out_of_range_props_are_rejected() {
        let cfg = RetinaConfig::standard();
        let props = StimulusProps::canonical(Identity::Digit(0)).with(Property::X, 0.3);
        assert!(render_stimulus(bar_glyph().view(), props, &cfg).is_err());
    }

    #[test]
    fn translation_moves_centroid_and_keeps_mass() {
        for cfg in [RetinaConfig::standard(), RetinaConfig::desk()] {
            let g = bar_glyph();
            let base = StimulusProps::canonical(Identity::Digit(0));
            let a = render_stimulus(g.view(), base.with(Property::X, -0.05), &cfg).unwrap();
            for delta in [0.01, 0.07, 0.13] {
                let b = render_stimulus(g.view(), base.with(Property::X, -0.05 + delta), &cfg).unwrap();
                let (ax, ay) = weighted_centroid(&a.pixels.view()).unwrap();
                let (bx, by) = weighted_centroid(&b.pixels.view()).unwrap();
                assert!((bx - ax - delta * cfg.width as f64).abs() < 1.0);
                assert!((by - ay).abs() < 1.0);
                let ma: f64 = a.pixels.sum();
                let mb: f64 = b.pixels.sum();
                assert!((ma - mb).abs() / ma < 0.01, "mass {ma} vs {mb}");
            }
        }
    }

    #[test]
    fn doubling_scale_doubles_bounding_box() {
        let mut cfg = RetinaConfig::standard();
        cfg.ranges.s = (0.5, 1.3);
        let width_at = |s: f64| {
            let img = render_stimulus(
                bar_glyph().view(),
                StimulusProps::canonical(Identity::Digit(0)).with(Property::S, s),
                &cfg,
            )
            .unwrap();
            let cols: Vec<usize> = img
                .pixels
                .indexed_iter()
                .filter(|(_, &v)| v > 0.0)
                .map(|((_, c), _)| c)
                .collect();
            (cols.iter().max().unwrap() - cols.iter().min().unwrap() + 1) as f64
        };
        let w1 = width_at(0.6);
        let w2 = width_at(1.2);
        assert!((w2 - 2.0 * w1).abs() <= 2.0, "{w1} -> {w2}");
    }

    fn small_corpus() -> DigitCorpus {
        let images = (0..10).map(|d| Array2::from_elem((28, 28), d as f64 / 10.0)).collect();
        DigitCorpus::new(images, (0..10).collect(), "synthetic").unwrap()
    }

    #[test]
    fn x_sweep_of_128_trials_stays_in_range() {
        let cfg = RetinaConfig::desk();
        let spec = TrialSpec::new(Swept::Property(Property::X), 128, 4);
        let set = sample_trial_set(&small_corpus(), &spec, &cfg).unwrap();
        assert_eq!(set.len(), 128);
        assert!(set.property_values.iter().all(|v| (-0.2..=0.2).contains(v)));
        for (s, v) in set.stimuli.iter().zip(&set.property_values) {
            assert_eq!(s.props.x, *v);
            assert_eq!(s.props.s, 1.0);
        }
    }

    #[test]
    fn single_trial_is_rejected() {
        let spec = TrialSpec::new(Swept::Property(Property::X), 1, 0);
        assert!(matches!(
            sample_trial_set(&small_corpus(), &spec, &RetinaConfig::desk()),
            Err(RrnError::Argument(_))
        ));
    }

    #[test]
    fn unknown_property_tag_is_an_argument_error() {
        assert!(matches!("z".parse::<Swept>(), Err(RrnError::Argument(_))));
        assert_eq!("none".parse::<Swept>().unwrap(), Swept::None);
    }

    #[test]
    fn trial_sets_are_deterministic_under_seed() {
        let cfg = RetinaConfig::desk();
        let spec = TrialSpec::new(Swept::Property(Property::R), 16, 99);
        let a = sample_trial_set(&small_corpus(), &spec, &cfg).unwrap();
        let b = sample_trial_set(&small_corpus(), &spec, &cfg).unwrap();
        assert_eq!(a.property_values, b.property_values);
        for (p, q) in a.stimuli.iter().zip(&b.stimuli) {
            assert_eq!(p, q);
        }
    }
}
