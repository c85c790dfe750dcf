use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Face regions a per-vertex annotation may use. Hair is deliberately absent:
/// it is only ever present in reference segmentations, where it is masked out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceClass {
    Skin,
    Nose,
    Ears,
    Eyes,
    UpperLip,
    LowerLip,
    MouthInterior,
    Background,
}

impl FaceClass {
    pub const ALL: [FaceClass; 8] = [
        FaceClass::Skin,
        FaceClass::Nose,
        FaceClass::Ears,
        FaceClass::Eyes,
        FaceClass::UpperLip,
        FaceClass::LowerLip,
        FaceClass::MouthInterior,
        FaceClass::Background,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FaceClass::Skin => "skin",
            FaceClass::Nose => "nose",
            FaceClass::Ears => "ears",
            FaceClass::Eyes => "eyes",
            FaceClass::UpperLip => "upper_lip",
            FaceClass::LowerLip => "lower_lip",
            FaceClass::MouthInterior => "mouth_interior",
            FaceClass::Background => "background",
        }
    }
}

impl fmt::Display for FaceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaceClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaceClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown face class `{s}`")))
    }
}

/// Per-vertex class labels. Label values index into `classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticAnnotation {
    classes: Vec<FaceClass>,
    labels: Vec<u32>,
}

impl SemanticAnnotation {
    pub fn new(classes: Vec<FaceClass>, labels: Vec<u32>) -> Result<Self> {
        // Class indices double as 8-bit mask values; 254/255 are reserved.
        if classes.len() > 250 {
            return Err(Error::invalid("too many classes for 8-bit class maps"));
        }
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= classes.len()) {
            return Err(Error::invalid(format!(
                "vertex {v} has label {l} but only {} classes exist",
                classes.len()
            )));
        }
        Ok(Self { classes, labels })
    }

    pub fn classes(&self) -> &[FaceClass] {
        &self.classes
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names_text(&self) -> String {
        self.classes.iter().map(|c| c.name()).collect::<Vec<_>>().join("\n")
    }

    pub fn parse_class_names(text: &str) -> Result<Vec<FaceClass>> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(FaceClass::from_str)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_labels_and_names() {
        let classes = vec![FaceClass::Skin, FaceClass::Nose];
        assert!(SemanticAnnotation::new(classes.clone(), vec![0, 1, 1]).is_ok());
        assert!(SemanticAnnotation::new(classes, vec![0, 2]).is_err());
        assert!("hair".parse::<FaceClass>().is_err());
        let text = SemanticAnnotation::new(vec![FaceClass::UpperLip, FaceClass::Eyes], vec![])
            .unwrap()
            .class_names_text();
        assert_eq!(
            SemanticAnnotation::parse_class_names(&text).unwrap(),
            vec![FaceClass::UpperLip, FaceClass::Eyes]
        );
    }
}
