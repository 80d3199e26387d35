use crate::error::{Error, Result};
use crate::numkit::Real;

/// Axis-aligned box in image coordinates, `x2 > x1` and `y2 > y1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Real> BoundingBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let b = BoundingBox { x1, y1, x2, y2 };
        if !(x2 > x1 && y2 > y1) || ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter(format!("invalid box {b:?}")));
        }
        Ok(b)
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        ((self.x1 + self.x2) * half, (self.y1 + self.y2) * half)
    }

    /// Tight box around both inputs.
    pub fn union(&self, other: &Self) -> Self {
        BoundingBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(T::zero());
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(T::zero());
        w * h
    }

    /// Box clipped to `[0, width] × [0, height]`; `None` if nothing of positive area remains.
    pub fn clip(&self, width: T, height: T) -> Option<Self> {
        let b = BoundingBox {
            x1: self.x1.max(T::zero()).min(width),
            y1: self.y1.max(T::zero()).min(height),
            x2: self.x2.max(T::zero()).min(width),
            y2: self.y2.max(T::zero()).min(height),
        };
        (b.x2 > b.x1 && b.y2 > b.y1).then_some(b)
    }
}

/// Intersection over union, in `[0, 1]`.
pub fn iou<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// Number of scalars in [`spatial_descriptor`].
pub const SPATIAL_DESCRIPTOR_LEN: usize = 11;

/// Box-pair layout scalars, each normalized to `[0, 1]` by the image size:
/// human center, width, height; object center, width, height; IoU; human and
/// object area relative to the image.
pub fn spatial_descriptor<T: Real>(
    human: &BoundingBox<T>,
    object: &BoundingBox<T>,
    image_width: T,
    image_height: T,
) -> Result<[T; SPATIAL_DESCRIPTOR_LEN]> {
    if !(image_width > T::zero() && image_height > T::zero()) {
        return Err(Error::Parameter(format!(
            "image size must be positive, got {image_width}x{image_height}"
        )));
    }
    let unit = |v: T| v.max(T::zero()).min(T::one());
    let area = image_width * image_height;
    let (hcx, hcy) = human.center();
    let (ocx, ocy) = object.center();
    Ok([
        unit(hcx / image_width),
        unit(hcy / image_height),
        unit(human.width() / image_width),
        unit(human.height() / image_height),
        unit(ocx / image_width),
        unit(ocy / image_height),
        unit(object.width() / image_width),
        unit(object.height() / image_height),
        iou(human, object),
        unit(human.area() / area),
        unit(object.area() / area),
    ])
}
