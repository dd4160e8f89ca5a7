//! Machining feature vocabulary shared by the generator, the text encoder and
//! the command parser.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    RectThroughSlot,
    RectBlindSlot,
    TriangularSlot,
    CircularThroughHole,
    CircularBlindHole,
    RectPocket,
    Step,
    SideNotch,
}

impl FeatureType {
    pub const ALL: [FeatureType; 8] = [
        FeatureType::RectThroughSlot,
        FeatureType::RectBlindSlot,
        FeatureType::TriangularSlot,
        FeatureType::CircularThroughHole,
        FeatureType::CircularBlindHole,
        FeatureType::RectPocket,
        FeatureType::Step,
        FeatureType::SideNotch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureType::RectThroughSlot => "rect_through_slot",
            FeatureType::RectBlindSlot => "rect_blind_slot",
            FeatureType::TriangularSlot => "triangular_slot",
            FeatureType::CircularThroughHole => "circular_through_hole",
            FeatureType::CircularBlindHole => "circular_blind_hole",
            FeatureType::RectPocket => "rect_pocket",
            FeatureType::Step => "step",
            FeatureType::SideNotch => "side_notch",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeatureType::RectThroughSlot => "Rectangular Through Slot",
            FeatureType::RectBlindSlot => "Rectangular Blind Slot",
            FeatureType::TriangularSlot => "Triangular Slot",
            FeatureType::CircularThroughHole => "Circular Through Hole",
            FeatureType::CircularBlindHole => "Circular Blind Hole",
            FeatureType::RectPocket => "Rectangular Pocket",
            FeatureType::Step => "Step",
            FeatureType::SideNotch => "Side Notch",
        }
    }

    /// Generic family name; `step` has no broader family.
    pub fn family(self) -> Option<FeatureFamily> {
        match self {
            FeatureType::RectThroughSlot | FeatureType::RectBlindSlot | FeatureType::TriangularSlot => {
                Some(FeatureFamily::Slot)
            }
            FeatureType::CircularThroughHole | FeatureType::CircularBlindHole => Some(FeatureFamily::Hole),
            FeatureType::RectPocket => Some(FeatureFamily::Pocket),
            FeatureType::Step => None,
            FeatureType::SideNotch => Some(FeatureFamily::Notch),
        }
    }

    /// Number of faces the synthetic template creates for one instance.
    pub fn template_face_count(self) -> usize {
        match self {
            FeatureType::RectThroughSlot => 3,
            FeatureType::RectBlindSlot => 4,
            FeatureType::TriangularSlot => 2,
            FeatureType::CircularThroughHole => 1,
            FeatureType::CircularBlindHole => 2,
            FeatureType::RectPocket => 5,
            FeatureType::Step => 2,
            FeatureType::SideNotch => 3,
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).expect("listed")
    }
}

impl fmt::Display for FeatureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coarse grouping used when a command names a feature only generically
/// ("the slot", "the hole").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureFamily {
    Slot,
    Hole,
    Pocket,
    Notch,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::Slot,
        FeatureFamily::Hole,
        FeatureFamily::Pocket,
        FeatureFamily::Notch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureFamily::Slot => "slot",
            FeatureFamily::Hole => "hole",
            FeatureFamily::Pocket => "pocket",
            FeatureFamily::Notch => "notch",
        }
    }
}

/// A feature reference as it may appear in a condition: a specific type or a family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureTerm {
    Specific(FeatureType),
    Family(FeatureFamily),
}

impl FeatureTerm {
    pub fn name(self) -> &'static str {
        match self {
            FeatureTerm::Specific(t) => t.name(),
            FeatureTerm::Family(f) => f.name(),
        }
    }

    /// Canonical condition vocabulary: eight specific types, then four families.
    pub fn vocabulary() -> Vec<FeatureTerm> {
        FeatureType::ALL
            .iter()
            .map(|&t| FeatureTerm::Specific(t))
            .chain(FeatureFamily::ALL.iter().map(|&f| FeatureTerm::Family(f)))
            .collect()
    }

    pub fn vocabulary_index(self) -> usize {
        match self {
            FeatureTerm::Specific(t) => t.index(),
            FeatureTerm::Family(f) => {
                FeatureType::ALL.len() + FeatureFamily::ALL.iter().position(|&x| x == f).expect("listed")
            }
        }
    }

    /// Resolves snake_case names, display names and common aliases,
    /// case-insensitively ("Rectangular Through Slot", "through slot", "Slot").
    pub fn parse(text: &str) -> Result<FeatureTerm> {
        let norm: String = text
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        let specific = |t| Ok(FeatureTerm::Specific(t));
        match norm.as_str() {
            "rect_through_slot" | "rectangular_through_slot" | "through_slot" => specific(FeatureType::RectThroughSlot),
            "rect_blind_slot" | "rectangular_blind_slot" | "blind_slot" => specific(FeatureType::RectBlindSlot),
            "triangular_slot" | "triangular_through_slot" | "v_slot" => specific(FeatureType::TriangularSlot),
            "circular_through_hole" | "through_hole" => specific(FeatureType::CircularThroughHole),
            "circular_blind_hole" | "blind_hole" => specific(FeatureType::CircularBlindHole),
            "rect_pocket" | "rectangular_pocket" => specific(FeatureType::RectPocket),
            "step" | "rectangular_through_step" => specific(FeatureType::Step),
            "side_notch" | "rectangular_side_notch" => specific(FeatureType::SideNotch),
            "slot" => Ok(FeatureTerm::Family(FeatureFamily::Slot)),
            "hole" | "circular_hole" => Ok(FeatureTerm::Family(FeatureFamily::Hole)),
            "pocket" => Ok(FeatureTerm::Family(FeatureFamily::Pocket)),
            "notch" => Ok(FeatureTerm::Family(FeatureFamily::Notch)),
            _ => Err(Error::UnknownFeature(text.to_string())),
        }
    }

    /// Does a feature of type `t` satisfy this term?
    pub fn matches(self, t: FeatureType) -> bool {
        match self {
            FeatureTerm::Specific(s) => s == t,
            FeatureTerm::Family(f) => t.family() == Some(f),
        }
    }
}

pub fn vocabulary_names() -> Vec<&'static str> {
    FeatureTerm::vocabulary().into_iter().map(FeatureTerm::name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_resolve() {
        assert_eq!(
            FeatureTerm::parse("Rectangular Through Slot").unwrap(),
            FeatureTerm::Specific(FeatureType::RectThroughSlot)
        );
        assert_eq!(
            FeatureTerm::parse("Slot").unwrap(),
            FeatureTerm::Family(FeatureFamily::Slot)
        );
        assert_eq!(
            FeatureTerm::parse("step").unwrap(),
            FeatureTerm::Specific(FeatureType::Step)
        );
        assert!(FeatureTerm::parse("chamfer").is_err());
        assert!(FeatureTerm::parse("").is_err());
    }

    #[test]
    fn every_name_roundtrips() {
        for term in FeatureTerm::vocabulary() {
            assert_eq!(FeatureTerm::parse(term.name()).unwrap(), term);
        }
        for t in FeatureType::ALL {
            assert_eq!(FeatureTerm::parse(t.display_name()).unwrap(), FeatureTerm::Specific(t));
        }
    }

    #[test]
    fn vocabulary_indices_are_dense() {
        let vocab = FeatureTerm::vocabulary();
        for (i, t) in vocab.iter().enumerate() {
            assert_eq!(t.vocabulary_index(), i);
        }
    }
}
