use serde::{Deserialize, Serialize};

/// Affine map into the unit frame: `unit = scale · (raw − center)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub center: [f64; 2],
    pub scale: f64,
}

impl Default for Frame {
    fn default() -> Self {
        Frame {
            center: [0.0, 0.0],
            scale: 1.0,
        }
    }
}

impl Frame {
    /// Centres the bounding box on the origin with its longer side equal to 2.
    /// A single point (zero extent) only gets translated.
    pub fn fit(coords: &[[f64; 2]]) -> Self {
        if coords.is_empty() {
            return Frame::default();
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in coords {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let scale = if side > 0.0 && side.is_finite() { 2.0 / side } else { 1.0 };
        Frame {
            center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
            scale,
        }
    }

    pub fn to_unit(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.scale * (p[0] - self.center[0]),
            self.scale * (p[1] - self.center[1]),
        ]
    }

    pub fn from_unit(&self, u: [f64; 2]) -> [f64; 2] {
        [
            u[0] / self.scale + self.center[0],
            u[1] / self.scale + self.center[1],
        ]
    }

    pub fn to_unit_all(&self, coords: &[[f64; 2]]) -> Vec<[f64; 2]> {
        coords.iter().map(|&p| self.to_unit(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounding_box_becomes_unit() {
        let coords = [[1.0, 1.0], [5.0, 2.0], [3.0, 3.0]];
        let f = Frame::fit(&coords);
        let u = f.to_unit_all(&coords);
        assert_eq!(u[0], [-1.0, -0.5]);
        assert_eq!(u[1], [1.0, 0.0]);
        assert_eq!(u[2], [0.0, 0.5]);
        for (p, q) in coords.iter().zip(&u) {
            let back = f.from_unit(*q);
            assert!((back[0] - p[0]).abs() < 1e-15 && (back[1] - p[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn collapsed_points_only_translate() {
        let f = Frame::fit(&[[2.0, 2.0], [2.0, 2.0]]);
        assert_eq!(f.scale, 1.0);
        assert_eq!(f.to_unit([2.0, 2.0]), [0.0, 0.0]);
    }
}
