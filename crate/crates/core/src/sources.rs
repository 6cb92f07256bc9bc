//! Training-time stimulus sources.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::DigitCorpus;
use crate::error::{Result, RrnError};
use crate::glyphs::{novel_glyph, NovelKind};
use crate::network::StimulusSource;
use crate::retina::{render_stimulus, Identity, RetinaConfig, RetinaImage};
use crate::seeded_rng;

fn check_width(batch: &Array2<f64>, cfg: &RetinaConfig) -> Result<()> {
    if batch.ncols() != cfg.pixels() {
        return Err(RrnError::Shape(format!(
            "batch rows have {} pixels, retina has {}",
            batch.ncols(),
            cfg.pixels()
        )));
    }
    Ok(())
}

/// Random corpus digits with all four properties redrawn every sample.
pub struct AugmentedDigits<'a> {
    corpus: &'a DigitCorpus,
    cfg: RetinaConfig,
    rng: ChaCha8Rng,
}

impl<'a> AugmentedDigits<'a> {
    pub fn new(corpus: &'a DigitCorpus, cfg: RetinaConfig, seed: u64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(RrnError::Argument("training corpus is empty".into()));
        }
        Ok(Self {
            corpus,
            cfg,
            rng: seeded_rng(seed),
        })
    }

    pub fn draw(&mut self) -> Result<RetinaImage> {
        let index = self.rng.random_range(0..self.corpus.len());
        let props = self
            .cfg
            .ranges
            .sample(&mut self.rng, Identity::Digit(self.corpus.label(index)));
        render_stimulus(self.corpus.image(index).view(), props, &self.cfg)
    }
}

impl StimulusSource for AugmentedDigits<'_> {
    fn fill(&mut self, batch: &mut Array2<f64>) -> Result<()> {
        check_width(batch, &self.cfg)?;
        for mut row in batch.outer_iter_mut() {
            let img = self.draw()?;
            row.assign(&ArrayView1::from(img.as_slice()));
        }
        Ok(())
    }
}

/// One novel structure under random properties.
pub struct AugmentedNovel<'a> {
    kind: NovelKind,
    corpus: &'a DigitCorpus,
    cfg: RetinaConfig,
    rng: ChaCha8Rng,
    fixed_glyph: Option<Array2<f64>>,
}

impl<'a> AugmentedNovel<'a> {
    pub fn new(kind: NovelKind, corpus: &'a DigitCorpus, cfg: RetinaConfig, seed: u64) -> Result<Self> {
        // procedural shapes never change; render them from one raster
        let fixed_glyph = match kind {
            NovelKind::MirroredDigit | NovelKind::DoubleDigit => None,
            _ => Some(novel_glyph(kind, corpus, 0)?),
        };
        Ok(Self {
            kind,
            corpus,
            cfg,
            rng: seeded_rng(seed),
            fixed_glyph,
        })
    }

    pub fn draw(&mut self) -> Result<RetinaImage> {
        let props = self.cfg.ranges.sample(&mut self.rng, Identity::Novel(self.kind));
        match &self.fixed_glyph {
            Some(g) => render_stimulus(g.view(), props, &self.cfg),
            None => {
                let glyph = novel_glyph(self.kind, self.corpus, self.rng.random())?;
                render_stimulus(glyph.view(), props, &self.cfg)
            }
        }
    }
}

impl StimulusSource for AugmentedNovel<'_> {
    fn fill(&mut self, batch: &mut Array2<f64>) -> Result<()> {
        check_width(batch, &self.cfg)?;
        for mut row in batch.outer_iter_mut() {
            let img = self.draw()?;
            row.assign(&ArrayView1::from(img.as_slice()));
        }
        Ok(())
    }
}

/// Each sample comes from `first` with probability `p_first`, else `second`.
pub struct Mixed<A, B> {
    pub first: A,
    pub second: B,
    pub p_first: f64,
    rng: ChaCha8Rng,
}

impl<A: StimulusSource, B: StimulusSource> Mixed<A, B> {
    pub fn new(first: A, second: B, p_first: f64, seed: u64) -> Self {
        Self {
            first,
            second,
            p_first,
            rng: seeded_rng(seed),
        }
    }
}

impl<A: StimulusSource, B: StimulusSource> StimulusSource for Mixed<A, B> {
    fn fill(&mut self, batch: &mut Array2<f64>) -> Result<()> {
        let mut one = Array2::zeros((1, batch.ncols()));
        for mut row in batch.outer_iter_mut() {
            if self.rng.random_bool(self.p_first.clamp(0.0, 1.0)) {
                self.first.fill(&mut one)?;
            } else {
                self.second.fill(&mut one)?;
            }
            row.assign(&one.row(0));
        }
        Ok(())
    }
}

/// Cycles through a fixed list of images in order.
pub struct FixedImages {
    images: Vec<RetinaImage>,
    cursor: usize,
}

impl FixedImages {
    pub fn new(images: Vec<RetinaImage>) -> Result<Self> {
        if images.is_empty() {
            return Err(RrnError::Argument("no images to cycle".into()));
        }
        Ok(Self { images, cursor: 0 })
    }
}

impl StimulusSource for FixedImages {
    fn fill(&mut self, batch: &mut Array2<f64>) -> Result<()> {
        for mut row in batch.outer_iter_mut() {
            let img = &self.images[self.cursor % self.images.len()];
            self.cursor += 1;
            if img.pixels.len() != row.len() {
                return Err(RrnError::Shape("fixed image does not match batch width".into()));
            }
            row.assign(&ArrayView1::from(img.as_slice()));
        }
        Ok(())
    }
}
