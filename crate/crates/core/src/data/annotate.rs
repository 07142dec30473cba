//! Rule-based two-tier tagging from generator parameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::{TagSet, TagVocab};

use super::face::{AgeBand, Expression, FaceParams, Focus, Lighting, Makeup, SkinTexture};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub semantic_tags: Vec<String>,
    pub photographic_tags: Vec<String>,
}

impl AnnotationRecord {
    /// Semantic tags followed by photographic tags.
    pub fn tag_set(&self) -> TagSet {
        self.semantic_tags.iter().chain(&self.photographic_tags).cloned().collect()
    }

    pub fn validate(&self, vocab: &TagVocab) -> Result<()> {
        for t in self.semantic_tags.iter().chain(&self.photographic_tags) {
            if !vocab.contains(t) {
                return Err(invalid(format!("tag {t:?} is not in the vocabulary")));
            }
        }
        Ok(())
    }
}

pub fn semantic_tags(p: &FaceParams) -> Vec<&'static str> {
    let age = match p.age {
        AgeBand::Child => "child",
        AgeBand::YoungAdult => "young adult",
        AgeBand::MiddleAged => "middle-aged",
        AgeBand::Elderly => "elderly",
    };
    let accessory = if p.glasses { "glasses" } else { "no accessories" };
    let expression = match p.expression {
        Expression::Smiling => "smiling",
        Expression::Neutral => "neutral expression",
    };
    vec![age, accessory, expression]
}

pub fn photographic_tags(p: &FaceParams) -> Vec<&'static str> {
    let lighting = match p.lighting {
        Lighting::Soft => "soft lighting",
        Lighting::Hard => "hard lighting",
    };
    let focus = match p.focus {
        Focus::Sharp => "sharp focus",
        Focus::Soft => "soft focus",
    };
    let skin = match p.skin {
        SkinTexture::Smooth => "smooth skin",
        SkinTexture::Detailed => "detailed skin texture",
    };
    let makeup = match p.makeup {
        Makeup::None => "no makeup",
        Makeup::Natural => "natural makeup",
        Makeup::RedLipstick => "red lipstick",
    };
    vec![lighting, focus, skin, makeup]
}

pub fn annotate(params: &FaceParams, vocab: &TagVocab) -> Result<AnnotationRecord> {
    let rec = AnnotationRecord {
        semantic_tags: semantic_tags(params).into_iter().map(String::from).collect(),
        photographic_tags: photographic_tags(params).into_iter().map(String::from).collect(),
    };
    rec.validate(vocab)?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::face::sample_face_params;

    #[test]
    fn soft_lighting_rule() {
        let mut p = sample_face_params(3, 64).unwrap();
        p.lighting = Lighting::Soft;
        let a = annotate(&p, &TagVocab::default()).unwrap();
        assert!(a.photographic_tags.iter().any(|t| t == "soft lighting"));
    }

    #[test]
    fn every_tag_is_known_and_deterministic() {
        let vocab = TagVocab::default();
        for seed in 0..100 {
            let p = sample_face_params(seed, 64).unwrap();
            let a = annotate(&p, &vocab).unwrap();
            assert_eq!(a, annotate(&p, &vocab).unwrap());
            assert_eq!(a.semantic_tags.len(), 3);
            assert_eq!(a.photographic_tags.len(), 4);
            vocab.rows(&a.tag_set()).unwrap();
        }
    }

    #[test]
    fn restricted_vocab_rejects() {
        let p = sample_face_params(0, 64).unwrap();
        let vocab = TagVocab::new(vec!["child".into()]);
        assert!(annotate(&p, &vocab).unwrap_err().is_invalid_argument());
    }
}
