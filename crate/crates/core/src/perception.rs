//! Per-role color thresholding and connected components.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::{pixel_to_world, Frame, Role};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("roles {0} and {1} have colors closer than twice the tolerance")]
    ColorsTooClose(Role, Role),
    #[error("frame is {got_w}x{got_h}, detector expects {want}x{want}")]
    FrameSize { got_w: usize, got_h: usize, want: usize },
}

/// One object found in a frame. Detections are not aligned across time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub role: Role,
    pub coords: [f64; 2],
    /// Blob size in pixels, when known.
    pub area: Option<u32>,
}

impl Detection {
    pub fn new(role: Role, coords: [f64; 2]) -> Self {
        Detection { role, coords, area: None }
    }
}

pub const DEFAULT_TOLERANCE: u8 = 10;
pub const MIN_COMPONENT_AREA: usize = 3;

const PALETTE: [[u8; 3]; 20] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
];

/// Role → RGB color, with a per-channel match tolerance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorMap {
    colors: BTreeMap<Role, [u8; 3]>,
    tolerance: u8,
}

impl ColorMap {
    pub fn new(colors: BTreeMap<Role, [u8; 3]>, tolerance: u8) -> Result<Self, PerceptionError> {
        let map = ColorMap { colors, tolerance };
        map.validate()?;
        Ok(map)
    }

    /// Built-in palette for roles `0..n_roles`.
    pub fn palette(n_roles: usize) -> Option<Self> {
        if n_roles > PALETTE.len() {
            return None;
        }
        let colors = (0..n_roles).map(|i| (Role(i as u8), PALETTE[i])).collect();
        Some(ColorMap { colors, tolerance: DEFAULT_TOLERANCE })
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let entries: Vec<_> = self.colors.iter().collect();
        let limit = 2 * self.tolerance as i32;
        for (i, (ra, ca)) in entries.iter().enumerate() {
            for (rb, cb) in &entries[i + 1..] {
                let sep = (0..3).map(|k| (ca[k] as i32 - cb[k] as i32).abs()).max().unwrap_or(0);
                if sep <= limit {
                    return Err(PerceptionError::ColorsTooClose(**ra, **rb));
                }
            }
        }
        Ok(())
    }

    pub fn color(&self, role: Role) -> Option<[u8; 3]> {
        self.colors.get(&role).copied()
    }

    pub fn tolerance(&self) -> u8 {
        self.tolerance
    }

    pub fn roles(&self) -> impl Iterator<Item = Role> + '_ {
        self.colors.keys().copied()
    }

    pub fn classify(&self, rgb: [u8; 3]) -> Option<Role> {
        let tol = self.tolerance as i32;
        self.colors
            .iter()
            .find(|(_, c)| (0..3).all(|k| (c[k] as i32 - rgb[k] as i32).abs() <= tol))
            .map(|(r, _)| *r)
    }
}

/// Threshold detector for square frames of a fixed size.
#[derive(Debug, Clone)]
pub struct Detector {
    colors: ColorMap,
    image_size: usize,
    half_extent: f64,
    min_area: usize,
}

impl Detector {
    pub fn new(colors: ColorMap, image_size: usize, half_extent: f64) -> Self {
        Detector { colors, image_size, half_extent, min_area: MIN_COMPONENT_AREA }
    }

    pub fn colors(&self) -> &ColorMap {
        &self.colors
    }

    /// One detection per 4-connected same-role component of at least
    /// `min_area` pixels, in scanline order of discovery.
    pub fn detect(&self, frame: &Frame) -> Result<Vec<Detection>, PerceptionError> {
        let (w, h) = (frame.width(), frame.height());
        if w != self.image_size || h != self.image_size {
            return Err(PerceptionError::FrameSize { got_w: w, got_h: h, want: self.image_size });
        }
        let labels: Vec<Option<Role>> = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                let px = frame.pixel(x, y);
                if px == [0, 0, 0] {
                    None
                } else {
                    self.colors.classify(px)
                }
            })
            .collect();

        let mut seen = vec![false; w * h];
        let mut queue = VecDeque::new();
        let mut out = Vec::new();
        for start in 0..w * h {
            let Some(role) = labels[start] else { continue };
            if seen[start] {
                continue;
            }
            seen[start] = true;
            queue.push_back(start);
            let (mut area, mut sx, mut sy) = (0usize, 0usize, 0usize);
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % w, i / w);
                area += 1;
                sx += x;
                sy += y;
                let mut visit = |j: usize| {
                    if !seen[j] && labels[j] == Some(role) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if x > 0 {
                    visit(i - 1);
                }
                if x + 1 < w {
                    visit(i + 1);
                }
                if y > 0 {
                    visit(i - w);
                }
                if y + 1 < h {
                    visit(i + w);
                }
            }
            if area < self.min_area {
                continue;
            }
            let cx = sx as f64 / area as f64;
            let cy = sy as f64 / area as f64;
            let he = self.half_extent;
            out.push(Detection {
                role,
                coords: [
                    pixel_to_world(cx, he, w).clamp(-he, he),
                    pixel_to_world(cy, he, h).clamp(-he, he),
                ],
                area: Some(area as u32),
            });
        }
        Ok(out)
    }
}

/// Drop each detection independently with probability `p`.
pub fn inject_dropout<R: Rng + ?Sized>(dets: &[Detection], p: f64, rng: &mut R) -> Vec<Detection> {
    assert!((0.0..=1.0).contains(&p), "dropout rate {p} outside [0, 1]");
    if p == 0.0 {
        return dets.to_vec();
    }
    dets.iter().filter(|_| rng.gen::<f64>() >= p).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::world_to_pixel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn detector() -> Detector {
        Detector::new(ColorMap::palette(4).unwrap(), 64, 1.0)
    }

    #[test]
    fn palette_is_well_separated() {
        let all = ColorMap::palette(PALETTE.len()).unwrap();
        all.validate().unwrap();
        assert!(all.classify([0, 0, 0]).is_none());
        assert!(ColorMap::palette(PALETTE.len() + 1).is_none());
    }

    #[test]
    fn close_colors_rejected() {
        let colors = [(Role(0), [100, 100, 100]), (Role(1), [120, 100, 100])].into_iter().collect();
        assert_eq!(ColorMap::new(colors, 10), Err(PerceptionError::ColorsTooClose(Role(0), Role(1))));
        let colors = [(Role(0), [100, 100, 100]), (Role(1), [121, 100, 100])].into_iter().collect();
        assert!(ColorMap::new(colors, 10).is_ok());
    }

    #[test]
    fn black_frame_yields_nothing() {
        assert!(detector().detect(&Frame::black(64, 64)).unwrap().is_empty());
    }

    #[test]
    fn wrong_frame_size() {
        assert!(matches!(detector().detect(&Frame::black(32, 64)), Err(PerceptionError::FrameSize { .. })));
    }

    #[test]
    fn single_disc_at_center() {
        let d = detector();
        let red = d.colors().color(Role(0)).unwrap();
        let mut f = Frame::black(64, 64);
        f.fill_disc(32, 32, 1.6, red);
        let dets = d.detect(&f).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].role, Role(0));
        assert_eq!(dets[0].area, Some(9));
        let px = 2.0 / 63.0;
        assert!(dets[0].coords[0].abs() <= px && dets[0].coords[1].abs() <= px);
    }

    #[test]
    fn two_same_color_discs() {
        let d = detector();
        let c = d.colors().color(Role(2)).unwrap();
        let mut f = Frame::black(64, 64);
        f.fill_disc(10, 10, 2.0, c);
        f.fill_disc(50, 50, 2.0, c);
        let dets = d.detect(&f).unwrap();
        assert_eq!(dets.len(), 2);
        for (det, p) in dets.iter().zip([10.0, 50.0]) {
            let want = pixel_to_world(p, 1.0, 64);
            assert_eq!(det.role, Role(2));
            assert!((det.coords[0] - want).abs() < 1e-12 && (det.coords[1] - want).abs() < 1e-12);
            assert_eq!(world_to_pixel(det.coords[0], 1.0, 64), p as i64);
        }
    }

    #[test]
    fn specks_below_min_area_ignored() {
        let d = detector();
        let c = d.colors().color(Role(1)).unwrap();
        let mut f = Frame::black(64, 64);
        f.set_pixel(5, 5, c);
        f.set_pixel(6, 5, c);
        // diagonal neighbours are not 4-connected
        f.set_pixel(20, 20, c);
        f.set_pixel(21, 21, c);
        f.set_pixel(22, 22, c);
        assert!(d.detect(&f).unwrap().is_empty());
        f.set_pixel(7, 5, c);
        assert_eq!(d.detect(&f).unwrap().len(), 1);
    }

    #[test]
    fn tolerance_window() {
        let d = detector();
        let c = d.colors().color(Role(3)).unwrap();
        let mut f = Frame::black(64, 64);
        let shifted = [c[0], c[1] - 10, c[2]];
        f.fill_disc(30, 30, 2.0, shifted);
        assert_eq!(d.detect(&f).unwrap()[0].role, Role(3));
        let too_far = [c[0], c[1] - 11, c[2]];
        f.fill_disc(30, 30, 2.0, too_far);
        assert!(d.detect(&f).unwrap().is_empty());
    }

    #[test]
    fn dropout_extremes() {
        let dets: Vec<_> = (0..50).map(|i| Detection::new(Role(0), [i as f64 / 50.0, 0.0])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(inject_dropout(&dets, 0.0, &mut rng), dets);
        assert!(inject_dropout(&dets, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn dropout_rate_concentrates() {
        let dets: Vec<_> = (0..10_000).map(|_| Detection::new(Role(0), [0.0, 0.0])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let kept = inject_dropout(&dets, 0.4, &mut rng).len() as f64 / 10_000.0;
        assert!((0.57..=0.63).contains(&kept), "kept {kept}");
    }
}
