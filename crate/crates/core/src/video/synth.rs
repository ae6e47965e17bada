//! Seeded synthetic scenes with controlled redundancy.
//!
//! All randomness comes from PCG32 (PCG-XSH-RR, 64-bit state, 32-bit output)
//! constructed as `Pcg32::new(seed, stream)`, consuming raw `next_u32`
//! outputs only, so a fixture can be reproduced in any language:
//!
//! * texture: stream 1; pixel `k` of the base texture is `next_u32() >> 24`.
//! * lighting: stream 2; one draw per frame index, `levels = 16 + below(49)`.
//! * noise: stream `(3 << 32) | frame_index`; pixel `k` is `next_u32() >> 24`.
//! * repeat positions: stream 4; partial Fisher-Yates over indices `1..n`.
//!
//! `below(n)` is `(next_u32() * n) >> 32`. A texture value `t` shaded to `L`
//! levels is `t * L / 256`.
//!
//! MovingObject frames put a `255`-valued rectangle of `max(1, w/8) x
//! max(1, h/8)` pixels, vertically centred, over the base texture shaded to
//! that frame's lighting level. The rectangle moves one pixel per frame and
//! bounces between the left and right edges.

use std::sync::Arc;

use rand_core::RngCore;
use rand_pcg::Pcg32;
use serde::{Deserialize, Serialize};

use super::{BBox, CaptureClock, Frame, VideoError};
use crate::error::ConfigError;

const TEXTURE_STREAM: u64 = 1;
const LIGHT_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3 << 32;
const REPEAT_STREAM: u64 = 4;

const STATIC_LEVELS: u32 = 64;
const MIN_LIGHT_LEVELS: u32 = 16;
const LIGHT_LEVEL_SPAN: u32 = 49;
const OBJECT_VALUE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Static,
    #[serde(alias = "moving")]
    MovingObject,
    #[serde(alias = "noise")]
    NoiseBurst,
    Composite,
}

impl SceneKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "static" => Some(Self::Static),
            "moving" | "moving_object" => Some(Self::MovingObject),
            "noise" | "noise_burst" => Some(Self::NoiseBurst),
            "composite" => Some(Self::Composite),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub frame_count: u64,
    pub seed: u64,
    /// Fraction of frames that exactly repeat their predecessor (Composite only).
    pub redundancy_ratio: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.frame_count == 0 {
            return Err(ConfigError::new("frames", "frame count must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.redundancy_ratio) {
            return Err(ConfigError::new(
                "redundancy",
                format!("must lie in [0, 1] (got {})", self.redundancy_ratio),
            ));
        }
        Ok(())
    }

    /// Number of exact-repeat frames a Composite scene contains.
    pub fn repeat_count(&self) -> u64 {
        if self.kind != SceneKind::Composite {
            return 0;
        }
        let wanted = (self.redundancy_ratio * self.frame_count as f64).round() as u64;
        wanted.min(self.frame_count - 1)
    }
}

/// Rectangle occupied by the moving object in frame `index`.
pub fn object_rect(width: u32, height: u32, index: u64) -> BBox {
    let w = (width / 8).max(1);
    let h = (height / 8).max(1);
    let span = (width - w) as u64;
    let x = if span == 0 {
        0
    } else {
        let t = index % (2 * span);
        if t <= span {
            t
        } else {
            2 * span - t
        }
    };
    BBox {
        x: x as u32,
        y: (height - h) / 2,
        w,
        h,
    }
}

fn below(rng: &mut Pcg32, n: u32) -> u32 {
    ((rng.next_u32() as u64 * n as u64) >> 32) as u32
}

fn shade(texture: &[u8], levels: u32) -> Vec<u8> {
    texture
        .iter()
        .map(|&t| (t as u32 * levels / 256) as u8)
        .collect()
}

/// Iterator over the frames of a synthetic scene.
pub struct SceneGenerator {
    spec: SceneSpec,
    width: u32,
    height: u32,
    clock: CaptureClock,
    texture: Vec<u8>,
    light: Pcg32,
    repeats: Vec<bool>,
    previous: Option<Frame>,
    next: u64,
}

pub fn generate_scene(
    spec: SceneSpec,
    width: u32,
    height: u32,
    clock: CaptureClock,
) -> Result<SceneGenerator, VideoError> {
    spec.validate()?;
    if width == 0 || height == 0 {
        return Err(ConfigError::new("width/height", "frame dimensions must be >= 1").into());
    }
    let pixels = width as usize * height as usize;
    let mut texture_rng = Pcg32::new(spec.seed, TEXTURE_STREAM);
    let texture = (0..pixels)
        .map(|_| (texture_rng.next_u32() >> 24) as u8)
        .collect();

    let n = spec.frame_count as usize;
    let mut repeats = vec![false; n];
    let k = spec.repeat_count() as usize;
    if k > 0 {
        let mut candidates: Vec<usize> = (1..n).collect();
        let mut rng = Pcg32::new(spec.seed, REPEAT_STREAM);
        for i in 0..k {
            let j = i + below(&mut rng, (candidates.len() - i) as u32) as usize;
            candidates.swap(i, j);
            repeats[candidates[i]] = true;
        }
    }

    Ok(SceneGenerator {
        spec,
        width,
        height,
        clock,
        texture,
        light: Pcg32::new(spec.seed, LIGHT_STREAM),
        repeats,
        previous: None,
        next: 0,
    })
}

impl SceneGenerator {
    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    /// Whether frame `index` is an exact copy of its predecessor.
    pub fn is_repeat(&self, index: u64) -> bool {
        self.repeats.get(index as usize).copied().unwrap_or(false)
    }

    fn moving_frame(&self, index: u64, levels: u32) -> (Vec<u8>, BBox) {
        let mut pixels = shade(&self.texture, levels);
        let rect = object_rect(self.width, self.height, index);
        for row in rect.y..rect.y + rect.h {
            let start = (row * self.width + rect.x) as usize;
            pixels[start..start + rect.w as usize].fill(OBJECT_VALUE);
        }
        (pixels, rect)
    }

    fn noise_frame(&self, index: u64) -> Vec<u8> {
        let mut rng = Pcg32::new(self.spec.seed, NOISE_STREAM | index);
        (0..self.texture.len())
            .map(|_| (rng.next_u32() >> 24) as u8)
            .collect()
    }
}

impl Iterator for SceneGenerator {
    type Item = Result<Frame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.spec.frame_count {
            return None;
        }
        let index = self.next;
        self.next += 1;
        // One lighting draw per index keeps frame i independent of the repeat mask.
        let levels = MIN_LIGHT_LEVELS + below(&mut self.light, LIGHT_LEVEL_SPAN);

        let (pixels, truth): (Arc<[u8]>, Option<BBox>) = match self.spec.kind {
            SceneKind::Static => match &self.previous {
                Some(prev) => (prev.shared_pixels(), None),
                None => (shade(&self.texture, STATIC_LEVELS).into(), None),
            },
            SceneKind::MovingObject => {
                let (px, rect) = self.moving_frame(index, levels);
                (px.into(), Some(rect))
            }
            SceneKind::NoiseBurst => (self.noise_frame(index).into(), None),
            SceneKind::Composite => match &self.previous {
                Some(prev) if self.repeats[index as usize] => (prev.shared_pixels(), prev.truth()),
                _ => {
                    let (px, rect) = self.moving_frame(index, levels);
                    (px.into(), Some(rect))
                }
            },
        };
        let stamp = self.clock.stamp(index);
        let frame = Frame::new(index, stamp, self.width, self.height, pixels)
            .map(|f| f.with_truth(truth));
        if let Ok(f) = &frame {
            self.previous = Some(f.clone());
        }
        Some(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{compute_histogram, entropy_delta, shannon_entropy};
    use crate::video::ClockMode;
    use std::time::Duration;

    fn frames(kind: SceneKind, n: u64, redundancy: f64, w: u32, h: u32) -> Vec<Frame> {
        let spec = SceneSpec {
            kind,
            frame_count: n,
            seed: 7,
            redundancy_ratio: redundancy,
        };
        let clock = CaptureClock::new(ClockMode::virtual_tick(Duration::from_millis(33)));
        generate_scene(spec, w, h, clock)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap()
    }

    fn entropy(frame: &Frame) -> crate::entropy::EntropyScore<f64> {
        shannon_entropy(&compute_histogram(frame.pixels()).unwrap())
    }

    #[test]
    fn static_scene_repeats_first_frame() {
        let fs = frames(SceneKind::Static, 10, 0.0, 320, 240);
        assert_eq!(fs.len(), 10);
        let h0 = entropy(&fs[0]);
        for f in &fs[1..] {
            assert_eq!(f.pixels(), fs[0].pixels());
            assert_eq!(entropy_delta(entropy(f), h0), 0.0);
        }
    }

    #[test]
    fn composite_repeat_count_is_exact() {
        let fs = frames(SceneKind::Composite, 100, 0.5, 64, 48);
        let repeats = fs
            .windows(2)
            .filter(|w| w[0].pixels() == w[1].pixels())
            .count();
        assert_eq!(repeats, 50);
    }

    #[test]
    fn composite_extremes() {
        let none = frames(SceneKind::Composite, 20, 0.0, 32, 24);
        assert!(none.windows(2).all(|w| w[0].pixels() != w[1].pixels()));
        let all = frames(SceneKind::Composite, 20, 1.0, 32, 24);
        assert!(all.windows(2).all(|w| w[0].pixels() == w[1].pixels()));
    }

    #[test]
    fn moving_object_truth_tracks_rectangle() {
        let fs = frames(SceneKind::MovingObject, 5, 0.0, 320, 240);
        for (i, f) in fs.iter().enumerate() {
            let rect = f.truth().unwrap();
            assert_eq!(rect, object_rect(320, 240, i as u64));
            assert_eq!(rect.x, i as u32);
            assert!(rect.fits_in(320, 240));
            let row = (rect.y * 320) as usize;
            assert_eq!(f.pixels()[row + rect.x as usize], OBJECT_VALUE);
        }
    }

    #[test]
    fn object_bounces_inside_frame() {
        for i in 0..2000 {
            assert!(object_rect(40, 16, i).fits_in(40, 16));
        }
        assert_eq!(object_rect(40, 16, 35).x, 35);
        assert_eq!(object_rect(40, 16, 36).x, 34);
        assert_eq!(object_rect(1, 1, 9), BBox { x: 0, y: 0, w: 1, h: 1 });
    }

    #[test]
    fn generation_is_deterministic() {
        let a = frames(SceneKind::Composite, 30, 0.3, 64, 48);
        let b = frames(SceneKind::Composite, 30, 0.3, 64, 48);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SceneSpec {
            kind: SceneKind::Static,
            frame_count: 0,
            seed: 0,
            redundancy_ratio: 0.0,
        };
        assert!(spec.validate().is_err());
        spec.frame_count = 3;
        spec.redundancy_ratio = 1.5;
        assert_eq!(spec.validate().unwrap_err().field, "redundancy");
    }

    #[test]
    fn pcg_reference_output() {
        // Published PCG32 demo values, then the streams the generator uses.
        let mut rng = Pcg32::new(42, 54);
        let demo: Vec<u32> = (0..6).map(|_| rng.next_u32()).collect();
        assert_eq!(demo, [2707161783, 2068313097, 3122475824, 2211639955, 3215226955, 3421331566]);
        let mut rng = Pcg32::new(7, TEXTURE_STREAM);
        let first: Vec<u32> = (0..3).map(|_| rng.next_u32()).collect();
        assert_eq!(first, [2215483850, 315054046, 1954657312]);
        let mut rng = Pcg32::new(7, LIGHT_STREAM);
        let levels: Vec<u32> = (0..5).map(|_| MIN_LIGHT_LEVELS + below(&mut rng, LIGHT_LEVEL_SPAN)).collect();
        assert_eq!(levels, [45, 25, 45, 44, 37]);
    }

    #[test]
    fn frames_match_reference_generator() {
        let spec = |kind| SceneSpec {
            kind,
            frame_count: 6,
            seed: 7,
            redundancy_ratio: 0.0,
        };
        let clock = CaptureClock::new(ClockMode::virtual_tick(Duration::from_millis(33)));
        let still: Vec<Frame> = generate_scene(spec(SceneKind::Static), 8, 2, clock)
            .unwrap()
            .map(Result::unwrap)
            .collect();
        let expected = [33, 4, 29, 62, 26, 26, 25, 38, 61, 51, 13, 49, 6, 1, 58, 49];
        assert!(still.iter().all(|f| f.pixels() == expected));
        let noise = generate_scene(spec(SceneKind::NoiseBurst), 8, 1, clock)
            .unwrap()
            .nth(5)
            .unwrap()
            .unwrap();
        assert_eq!(noise.pixels(), [40, 142, 134, 98, 95, 137, 107, 228]);
    }
}
