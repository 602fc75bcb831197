//! Phase-space axes and the 15 axis pairs a 6D density projects onto.

use core::fmt;

use crate::error::{Error, Result};

/// Phase-space coordinate, in canonical order `(x, x', y, y', z, E)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Axis {
    #[cfg_attr(feature = "serde", serde(rename = "x"))]
    X,
    #[cfg_attr(feature = "serde", serde(rename = "x'"))]
    Xp,
    #[cfg_attr(feature = "serde", serde(rename = "y"))]
    Y,
    #[cfg_attr(feature = "serde", serde(rename = "y'"))]
    Yp,
    #[cfg_attr(feature = "serde", serde(rename = "z"))]
    Z,
    #[cfg_attr(feature = "serde", serde(rename = "E"))]
    E,
}

impl Axis {
    pub const ALL: [Axis; 6] = [Axis::X, Axis::Xp, Axis::Y, Axis::Yp, Axis::Z, Axis::E];

    /// Position in the 6-vector layout of a beam state.
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Xp => "x'",
            Axis::Y => "y",
            Axis::Yp => "y'",
            Axis::Z => "z",
            Axis::E => "E",
        }
    }

    pub fn from_label(s: &str) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.label() == s)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// An ordered pair of distinct axes with `first < second` canonically.
///
/// The first axis runs along image columns, the second along rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "(Axis, Axis)", into = "(Axis, Axis)"))]
pub struct AxisPair {
    first: Axis,
    second: Axis,
}

impl AxisPair {
    pub const X_XP: AxisPair = AxisPair { first: Axis::X, second: Axis::Xp };
    pub const Y_YP: AxisPair = AxisPair { first: Axis::Y, second: Axis::Yp };
    pub const Z_E: AxisPair = AxisPair { first: Axis::Z, second: Axis::E };
    pub const X_Y: AxisPair = AxisPair { first: Axis::X, second: Axis::Y };

    pub fn new(first: Axis, second: Axis) -> Result<Self> {
        if first < second {
            Ok(AxisPair { first, second })
        } else {
            Err(Error::InvalidConfig(alloc::format!(
                "axis pair ({first},{second}) is not in canonical order"
            )))
        }
    }

    pub const fn first(self) -> Axis {
        self.first
    }

    pub const fn second(self) -> Axis {
        self.second
    }

    /// Position of this pair in [`enumerate_axis_pairs`].
    pub fn ordinal(self) -> usize {
        AXIS_PAIRS
            .iter()
            .position(|p| *p == self)
            .expect("every canonical pair is enumerated")
    }

    /// Parses labels such as `"z,E"` or `"x,x'"`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(alloc::format!("unrecognised axis pair {s:?}"));
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        let a = Axis::from_label(a.trim()).ok_or_else(bad)?;
        let b = Axis::from_label(b.trim()).ok_or_else(bad)?;
        AxisPair::new(a, b)
    }
}

impl TryFrom<(Axis, Axis)> for AxisPair {
    type Error = Error;

    fn try_from((a, b): (Axis, Axis)) -> Result<Self> {
        AxisPair::new(a, b)
    }
}

impl From<AxisPair> for (Axis, Axis) {
    fn from(p: AxisPair) -> Self {
        (p.first, p.second)
    }
}

impl fmt::Display for AxisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.first, self.second)
    }
}

const fn pair(first: Axis, second: Axis) -> AxisPair {
    AxisPair { first, second }
}

static AXIS_PAIRS: [AxisPair; 15] = {
    use Axis::*;
    [
        pair(X, Y),
        pair(X, Z),
        pair(X, Xp),
        pair(X, Yp),
        pair(X, E),
        pair(Xp, Y),
        pair(Xp, Z),
        pair(Xp, Yp),
        pair(Xp, E),
        pair(Y, Z),
        pair(Y, Yp),
        pair(Y, E),
        pair(Yp, Z),
        pair(Yp, E),
        pair(Z, E),
    ]
};

/// All 15 axis pairs in the canonical channel order.
pub fn enumerate_axis_pairs() -> &'static [AxisPair; 15] {
    &AXIS_PAIRS
}
