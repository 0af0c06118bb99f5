use serde::{Deserialize, Serialize};

/// Rigid in-plane motion `p -> R(angle) p + t`, lengths in micrometres.
///
/// For a section, the transform maps volume-frame in-plane coordinates to the
/// section's own (image) frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform2D {
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
}

impl RigidTransform2D {
    pub const IDENTITY: Self = Self { angle: 0.0, tx: 0.0, ty: 0.0 };

    pub fn new(angle: f64, tx: f64, ty: f64) -> Self {
        Self { angle, tx, ty }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [c * p[0] - s * p[1] + self.tx, s * p[0] + c * p[1] + self.ty]
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.angle.sin_cos();
        // R^T (p - t)
        Self { angle: -self.angle, tx: -(c * self.tx + s * self.ty), ty: -(-s * self.tx + c * self.ty) }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply([other.tx, other.ty]);
        Self { angle: self.angle + other.angle, tx: t[0], ty: t[1] }
    }

    pub fn is_identity(&self) -> bool {
        self.angle == 0.0 && self.tx == 0.0 && self.ty == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn inverse_round_trip(angle in -3.2f64..3.2, tx in -5e3f64..5e3, ty in -5e3f64..5e3, x in -2e4f64..2e4, y in -2e4f64..2e4) {
            let t = RigidTransform2D::new(angle, tx, ty);
            let q = t.inverse().apply(t.apply([x, y]));
            prop_assert!((q[0] - x).abs() < 1e-6 && (q[1] - y).abs() < 1e-6);
            let c = t.compose(&t.inverse()).apply([x, y]);
            prop_assert!((c[0] - x).abs() < 1e-6 && (c[1] - y).abs() < 1e-6);
        }
    }
}
