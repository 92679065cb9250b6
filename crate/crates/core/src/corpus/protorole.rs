//! Proto-role properties, ratings and their binarization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The 18 proto-role properties, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Property {
    Awareness,
    ChangeOfLocation,
    ChangeOfState,
    ChangesPossession,
    ExistedAfter,
    ExistedBefore,
    ExistedDuring,
    ExistsAsPhysical,
    Instigation,
    LocationOfEvent,
    MakesPhysicalContact,
    ManipulatedByAnother,
    PredChangedArg,
    Sentient,
    Stationary,
    Volition,
    Created,
    Destroyed,
}

pub const PROPERTY_COUNT: usize = 18;

const PROPERTY_NAMES: [&str; PROPERTY_COUNT] = [
    "awareness",
    "change_of_location",
    "change_of_state",
    "changes_possession",
    "existed_after",
    "existed_before",
    "existed_during",
    "exists_as_physical",
    "instigation",
    "location_of_event",
    "makes_physical_contact",
    "manipulated_by_another",
    "pred_changed_arg",
    "sentient",
    "stationary",
    "volition",
    "created",
    "destroyed",
];

impl Property {
    pub const ALL: [Property; PROPERTY_COUNT] = [
        Property::Awareness,
        Property::ChangeOfLocation,
        Property::ChangeOfState,
        Property::ChangesPossession,
        Property::ExistedAfter,
        Property::ExistedBefore,
        Property::ExistedDuring,
        Property::ExistsAsPhysical,
        Property::Instigation,
        Property::LocationOfEvent,
        Property::MakesPhysicalContact,
        Property::ManipulatedByAnother,
        Property::PredChangedArg,
        Property::Sentient,
        Property::Stationary,
        Property::Volition,
        Property::Created,
        Property::Destroyed,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        PROPERTY_NAMES[self.index()]
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PROPERTY_NAMES
            .iter()
            .position(|n| *n == s)
            .map(|i| Property::ALL[i])
            .ok_or_else(|| format!("unknown proto-role property {s:?}"))
    }
}

impl Serialize for Property {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Property {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A human judgment on the 1..5 scale, or a judgment that the property does not apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rating {
    Score(i64),
    NotApplicable,
}

impl Rating {
    pub fn validate(self) -> Result<Self> {
        match self {
            Rating::Score(v) if !(1..=5).contains(&v) => Err(Error::RatingDomain(v)),
            r => Ok(r),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RatingRepr {
    Score(i64),
    Na { na: bool },
}

impl Serialize for Rating {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Rating::Score(v) => RatingRepr::Score(v),
            Rating::NotApplicable => RatingRepr::Na { na: true },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rating {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RatingRepr::deserialize(d)? {
            RatingRepr::Score(v) => Ok(Rating::Score(v)),
            RatingRepr::Na { na: true } => Ok(Rating::NotApplicable),
            RatingRepr::Na { na: false } => Err(serde::de::Error::custom(
                "rating object must be {\"na\": true}",
            )),
        }
    }
}

/// How ratings turn into binary labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPolicy {
    pub threshold: i64,
    /// Map NOT_APPLICABLE to the negative class; otherwise such judgments carry no label.
    pub na_as_negative: bool,
}

impl Default for LabelPolicy {
    fn default() -> Self {
        LabelPolicy {
            threshold: 2,
            na_as_negative: true,
        }
    }
}

impl LabelPolicy {
    pub fn label(&self, rating: Rating) -> Result<Option<u8>> {
        match rating {
            Rating::NotApplicable if !self.na_as_negative => {
                check_threshold(self.threshold)?;
                Ok(None)
            }
            r => binarize_rating(r, self.threshold).map(Some),
        }
    }
}

fn check_threshold(threshold: i64) -> Result<()> {
    if (1..=4).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::Threshold(threshold))
    }
}

/// 1 iff the rating is numeric and strictly above `threshold`.
pub fn binarize_rating(rating: Rating, threshold: i64) -> Result<u8> {
    check_threshold(threshold)?;
    match rating.validate()? {
        Rating::Score(v) => Ok(u8::from(v > threshold)),
        Rating::NotApplicable => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize_rating(Rating::Score(3), 2).unwrap(), 1);
        assert_eq!(binarize_rating(Rating::Score(2), 2).unwrap(), 0);
        assert_eq!(binarize_rating(Rating::Score(5), 3).unwrap(), 1);
        assert_eq!(binarize_rating(Rating::NotApplicable, 2).unwrap(), 0);
    }

    #[test]
    fn binarize_rejects_out_of_domain() {
        assert!(matches!(
            binarize_rating(Rating::Score(0), 2),
            Err(Error::RatingDomain(0))
        ));
        assert!(matches!(
            binarize_rating(Rating::Score(6), 2),
            Err(Error::RatingDomain(6))
        ));
        assert!(matches!(
            binarize_rating(Rating::Score(3), 5),
            Err(Error::Threshold(5))
        ));
    }

    #[test]
    fn binarize_is_monotone() {
        for t in 1..=4 {
            let labels: Vec<u8> = (1..=5)
                .map(|r| binarize_rating(Rating::Score(r), t).unwrap())
                .collect();
            assert!(labels.windows(2).all(|w| w[0] <= w[1]), "threshold {t}");
        }
    }

    #[test]
    fn na_policy_switch() {
        let skip = LabelPolicy {
            threshold: 2,
            na_as_negative: false,
        };
        assert_eq!(skip.label(Rating::NotApplicable).unwrap(), None);
        assert_eq!(LabelPolicy::default().label(Rating::NotApplicable).unwrap(), Some(0));
    }

    #[test]
    fn property_names_round_trip() {
        assert_eq!(Property::ALL.len(), 18);
        for p in Property::ALL {
            assert_eq!(p.name().parse::<Property>().unwrap(), p);
        }
    }

    #[test]
    fn rating_json() {
        let na: Rating = serde_json::from_str(r#"{"na": true}"#).unwrap();
        assert_eq!(na, Rating::NotApplicable);
        assert_eq!(serde_json::to_string(&Rating::Score(4)).unwrap(), "4");
        assert!(serde_json::from_str::<Rating>(r#"{"na": false}"#).is_err());
    }
}
