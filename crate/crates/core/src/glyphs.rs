//! Procedural non-digit structures used as novel stimuli.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::retina::{render_stimulus, Identity, RetinaConfig, RetinaImage, StimulusProps};
use crate::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NovelKind {
    SolidSquare,
    SolidTriangle,
    MirroredDigit,
    DoubleDigit,
    SymbolX,
}

impl NovelKind {
    pub const ALL: [NovelKind; 5] = [
        NovelKind::SolidSquare,
        NovelKind::SolidTriangle,
        NovelKind::MirroredDigit,
        NovelKind::DoubleDigit,
        NovelKind::SymbolX,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            NovelKind::SolidSquare => "solid_square",
            NovelKind::SolidTriangle => "solid_triangle",
            NovelKind::MirroredDigit => "mirrored_digit",
            NovelKind::DoubleDigit => "double_digit",
            NovelKind::SymbolX => "symbol_x",
        }
    }

    fn needs_corpus(self) -> bool {
        matches!(self, NovelKind::MirroredDigit | NovelKind::DoubleDigit)
    }
}

impl fmt::Display for NovelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NovelKind {
    type Err = RrnError;

    fn from_str(s: &str) -> Result<Self> {
        NovelKind::ALL
            .into_iter()
            .find(|k| k.tag() == s.trim())
            .ok_or_else(|| RrnError::Argument(format!("unknown novel structure `{s}`")))
    }
}

pub fn solid_square(n: usize) -> Array2<f64> {
    let side = ((n as f64) * 4.0 / 7.0).round() as usize;
    let start = (n - side) / 2;
    let mut g = Array2::zeros((n, n));
    g.slice_mut(s![start..start + side, start..start + side]).fill(1.0);
    g
}

/// Upright isosceles triangle, apex at the top.
pub fn solid_triangle(n: usize) -> Array2<f64> {
    let top = (n as f64 * 0.18).round();
    let bottom = n as f64 - 1.0 - top;
    let center = (n as f64 - 1.0) / 2.0;
    let half_base = n as f64 * 0.33;
    Array2::from_shape_fn((n, n), |(r, c)| {
        let r = r as f64;
        if r < top || r > bottom {
            return 0.0;
        }
        let half = (r - top) / (bottom - top) * half_base;
        if (c as f64 - center).abs() <= half {
            1.0
        } else {
            0.0
        }
    })
}

/// Two crossed diagonal strokes with anti-aliased edges.
pub fn symbol_x(n: usize) -> Array2<f64> {
    let margin = (n as f64 / 7.0).round() as usize;
    let last = (n - 1) as f64;
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i < margin || j < margin || i > n - 1 - margin || j > n - 1 - margin {
            return 0.0;
        }
        let (fi, fj) = (i as f64, j as f64);
        let d1 = (fi - fj).abs() / std::f64::consts::SQRT_2;
        let d2 = (fi + fj - last).abs() / std::f64::consts::SQRT_2;
        (2.0 - d1.min(d2)).clamp(0.0, 1.0)
    })
}

pub fn mirrored(glyph: &Array2<f64>) -> Array2<f64> {
    glyph.slice(s![.., ..;-1]).to_owned()
}

/// Two glyphs, each squeezed to half width, side by side in one box.
pub fn side_by_side(left: &Array2<f64>, right: &Array2<f64>) -> Array2<f64> {
    let (h, w) = left.dim();
    let half = w / 2;
    let squeeze = |g: &Array2<f64>| {
        Array2::from_shape_fn((h, half), |(r, c)| {
            let a = g[[r, (2 * c).min(w - 1)]];
            let b = g[[r, (2 * c + 1).min(w - 1)]];
            0.5 * (a + b)
        })
    };
    let mut out = Array2::zeros((h, w));
    out.slice_mut(s![.., ..half]).assign(&squeeze(left));
    out.slice_mut(s![.., half..2 * half]).assign(&squeeze(right));
    out
}

/// Raster the requested structure in the corpus glyph box.
pub fn novel_glyph(kind: NovelKind, corpus: &DigitCorpus, seed: u64) -> Result<Array2<f64>> {
    if kind.needs_corpus() && corpus.is_empty() {
        return Err(RrnError::Argument(format!("{kind} needs a non-empty corpus")));
    }
    let (n, _) = corpus.glyph_shape();
    let mut rng = seeded_rng(seed);
    Ok(match kind {
        NovelKind::SolidSquare => solid_square(n),
        NovelKind::SolidTriangle => solid_triangle(n),
        NovelKind::SymbolX => symbol_x(n),
        NovelKind::MirroredDigit => mirrored(corpus.image(rng.random_range(0..corpus.len()))),
        NovelKind::DoubleDigit => {
            let a = rng.random_range(0..corpus.len());
            let b = rng.random_range(0..corpus.len());
            side_by_side(corpus.image(a), corpus.image(b))
        }
    })
}

/// Generate a novel structure and render it with `props`.
pub fn generate_novel(
    kind: NovelKind,
    props: StimulusProps,
    corpus: &DigitCorpus,
    seed: u64,
    cfg: &RetinaConfig,
) -> Result<RetinaImage> {
    let glyph = novel_glyph(kind, corpus, seed)?;
    let props = StimulusProps {
        identity: Identity::Novel(kind),
        ..props
    };
    render_stimulus(glyph.view(), props, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus_with(glyph: Array2<f64>) -> DigitCorpus {
        DigitCorpus::new(vec![glyph], vec![0], "one").unwrap()
    }

    fn canonical() -> StimulusProps {
        StimulusProps::canonical(Identity::Digit(0))
    }

    #[test]
    fn square_rows_have_constant_sums() {
        let cfg = RetinaConfig::standard();
        let corpus = corpus_with(Array2::zeros((28, 28)));
        let img = generate_novel(NovelKind::SolidSquare, canonical(), &corpus, 0, &cfg).unwrap();
        let sums: Vec<f64> = img
            .pixels
            .rows()
            .into_iter()
            .map(|r| r.sum())
            .filter(|&s| s > 0.0)
            .collect();
        assert_eq!(sums.len(), 16);
        assert!(sums.iter().all(|&s| (s - sums[0]).abs() < 1e-12));
        assert_eq!(img.props.identity, Identity::Novel(NovelKind::SolidSquare));
    }

    #[test]
    fn mirroring_a_symmetric_glyph_is_a_no_op() {
        let cfg = RetinaConfig::standard();
        let sym = Array2::from_shape_fn((28, 28), |(r, c)| {
            let dc = (c as f64 - 13.5).abs();
            if (4..24).contains(&r) && dc < 6.0 {
                1.0 - dc / 6.0
            } else {
                0.0
            }
        });
        let corpus = corpus_with(sym.clone());
        let plain = render_stimulus(sym.view(), canonical(), &cfg).unwrap();
        let mirror = generate_novel(NovelKind::MirroredDigit, canonical(), &corpus, 3, &cfg).unwrap();
        let max = plain
            .pixels
            .iter()
            .zip(mirror.pixels.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max < 1e-6);
    }

    #[test]
    fn symbol_x_has_two_fold_rotational_symmetry() {
        for cfg in [RetinaConfig::standard(), RetinaConfig::desk()] {
            let corpus = corpus_with(Array2::zeros((28, 28)));
            let img = generate_novel(NovelKind::SymbolX, canonical(), &corpus, 0, &cfg).unwrap();
            let w = cfg.width;
            assert!(img.pixels.sum() > 0.0);
            for i in 0..w {
                for j in 0..w {
                    let d = (img.pixels[[i, j]] - img.pixels[[w - 1 - i, w - 1 - j]]).abs();
                    assert!(d < 1e-9, "({i},{j}) differs by {d}");
                }
            }
        }
    }

    #[test]
    fn corpus_dependent_kinds_need_a_corpus() {
        let empty = DigitCorpus::new(vec![], vec![], "empty").unwrap();
        let cfg = RetinaConfig::desk();
        assert!(generate_novel(NovelKind::DoubleDigit, canonical(), &empty, 0, &cfg).is_err());
        assert!(generate_novel(NovelKind::SolidTriangle, canonical(), &empty, 0, &cfg).is_ok());
    }

    #[test]
    fn unknown_kind_is_an_argument_error() {
        assert!(matches!("circle".parse::<NovelKind>(), Err(RrnError::Argument(_))));
        assert_eq!("symbol_x".parse::<NovelKind>().unwrap(), NovelKind::SymbolX);
    }

    #[test]
    fn double_digit_places_both_halves() {
        let left = Array2::from_elem((28, 28), 1.0);
        let g = side_by_side(&left, &Array2::zeros((28, 28)));
        assert_eq!(g.slice(s![.., ..14]).sum(), 28.0 * 14.0);
        assert_eq!(g.slice(s![.., 14..]).sum(), 0.0);
    }
}
