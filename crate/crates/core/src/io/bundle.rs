//! Scene bundles: a `key = value` file naming the inputs of one estimate.
//!
//! ```text
//! object = template.obj
//! human = human.obj
//! features = features.fmap
//! silhouette = silhouette.pgm
//! object_silhouette = object.pgm
//! confidence = 1
//! depth = depth.dmap
//! camera = desk
//! contact = contact.txt
//! features_seed = 7
//! features_channels = 24
//! ```
//!
//! Relative paths resolve against the bundle's directory.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::{parse_key_values, read_text, IoError};
use crate::labels::HandFlags;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub object: PathBuf,
    pub human: Option<PathBuf>,
    pub features: PathBuf,
    pub silhouette: PathBuf,
    pub object_silhouette: PathBuf,
    /// Object mask confidence, used as `lambda_object`.
    pub confidence: Option<f64>,
    pub depth: Option<PathBuf>,
    /// Mean metric depth of the human (m); rendered from the human mesh when absent.
    pub human_depth: Option<f64>,
    /// Camera preset name; the config camera is used when absent.
    pub camera: Option<String>,
    pub contact: Option<PathBuf>,
    pub features_seed: u64,
    pub features_channels: usize,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, IoError> {
    v.parse().map_err(|_| IoError::format(format!("{key}: cannot parse {v:?}")))
}

impl SceneBundle {
    pub fn parse(text: &str, base: &Path) -> Result<Self, IoError> {
        let mut object = None;
        let mut human = None;
        let mut features = None;
        let mut silhouette = None;
        let mut object_silhouette = None;
        let mut confidence = None;
        let mut depth = None;
        let mut human_depth = None;
        let mut camera = None;
        let mut contact = None;
        let mut features_seed = None;
        let mut features_channels = None;
        let path = |v: &str| base.join(v);
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "object" => object = Some(path(&v)),
                "human" => human = Some(path(&v)),
                "features" => features = Some(path(&v)),
                "silhouette" => silhouette = Some(path(&v)),
                "object_silhouette" => object_silhouette = Some(path(&v)),
                "confidence" => confidence = Some(parse_num::<f64>(&k, &v)?),
                "depth" => depth = Some(path(&v)),
                "human_depth" => human_depth = Some(parse_num::<f64>(&k, &v)?),
                "camera" => camera = Some(v),
                "contact" => contact = Some(path(&v)),
                "features_seed" => features_seed = Some(parse_num(&k, &v)?),
                "features_channels" => features_channels = Some(parse_num(&k, &v)?),
                _ => return Err(IoError::invalid(format!("unknown bundle key {k:?}"))),
            }
        }
        let req = |v: Option<PathBuf>, k: &str| v.ok_or_else(|| IoError::invalid(format!("bundle is missing {k:?}")));
        let b = SceneBundle {
            object: req(object, "object")?,
            human,
            features: req(features, "features")?,
            silhouette: req(silhouette, "silhouette")?,
            object_silhouette: req(object_silhouette, "object_silhouette")?,
            confidence,
            depth,
            human_depth,
            camera,
            contact,
            features_seed: features_seed.unwrap_or(7),
            features_channels: features_channels.unwrap_or(24),
        };
        if let Some(c) = b.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(IoError::invalid(format!("confidence {c} outside [0, 1]")));
            }
        }
        if b.features_channels == 0 {
            return Err(IoError::invalid("features_channels must be positive"));
        }
        Ok(b)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = read_text(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Bundle text with paths written relative to `base` when possible.
    pub fn to_text(&self, base: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
        let mut s = String::new();
        let _ = writeln!(s, "object = {}", rel(&self.object));
        if let Some(h) = &self.human {
            let _ = writeln!(s, "human = {}", rel(h));
        }
        let _ = writeln!(s, "features = {}", rel(&self.features));
        let _ = writeln!(s, "silhouette = {}", rel(&self.silhouette));
        let _ = writeln!(s, "object_silhouette = {}", rel(&self.object_silhouette));
        if let Some(c) = self.confidence {
            let _ = writeln!(s, "confidence = {c}");
        }
        if let Some(d) = &self.depth {
            let _ = writeln!(s, "depth = {}", rel(d));
        }
        if let Some(d) = self.human_depth {
            let _ = writeln!(s, "human_depth = {d}");
        }
        if let Some(c) = &self.camera {
            let _ = writeln!(s, "camera = {c}");
        }
        if let Some(c) = &self.contact {
            let _ = writeln!(s, "contact = {}", rel(c));
        }
        let _ = writeln!(s, "features_seed = {}", self.features_seed);
        let _ = writeln!(s, "features_channels = {}", self.features_channels);
        s
    }
}

/// Hand contact flags and palm vertex indices on the human mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContactFile {
    pub hands: HandFlags,
    pub palm_left: Vec<usize>,
    pub palm_right: Vec<usize>,
}

fn indices(key: &str, v: &str) -> Result<Vec<usize>, IoError> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl ContactFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut out = ContactFile::default();
        let mut hands = false;
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "hands" => {
                    out.hands = HandFlags::parse(&v).map_err(|e| IoError::format(e.to_string()))?;
                    hands = true;
                }
                "palm_left" => out.palm_left = indices(&k, &v)?,
                "palm_right" => out.palm_right = indices(&k, &v)?,
                _ => return Err(IoError::invalid(format!("unknown contact key {k:?}"))),
            }
        }
        if !hands {
            return Err(IoError::invalid("contact file is missing \"hands\""));
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        format!(
            "hands = {}\npalm_left = {}\npalm_right = {}\n",
            self.hands.to_reply(),
            join(&self.palm_left),
            join(&self.palm_right)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_resolves_and_roundtrips() {
        let base = Path::new("/data/scene");
        let text = "object = t.obj\nfeatures = f.fmap\nsilhouette = s.pgm\nobject_silhouette = o.pgm\ndepth = d.dmap\nconfidence = 0.9\n";
        let b = SceneBundle::parse(text, base).unwrap();
        assert_eq!(b.object, base.join("t.obj"));
        assert_eq!(b.human, None);
        assert_eq!(b.confidence, Some(0.9));
        assert_eq!((b.features_seed, b.features_channels), (7, 24));
        assert_eq!(SceneBundle::parse(&b.to_text(base), base).unwrap(), b);
    }

    #[test]
    fn bundle_errors() {
        let base = Path::new(".");
        assert!(matches!(SceneBundle::parse("object = a.obj", base), Err(IoError::Invalid(_))));
        let full = "object = t\nfeatures = f\nsilhouette = s\nobject_silhouette = o\n";
        assert!(SceneBundle::parse(&format!("{full}confidence = 2"), base).is_err());
        assert!(matches!(SceneBundle::parse(&format!("{full}colour = red"), base), Err(IoError::Invalid(_))));
        assert!(matches!(SceneBundle::parse(&format!("{full}features_seed = x"), base), Err(IoError::Format(_))));
    }

    #[test]
    fn contact_file_roundtrip() {
        let c = ContactFile::parse("hands = Left Hand: True, Right Hand: False\npalm_left = 8, 9 10 11\n").unwrap();
        assert!(c.hands.left && !c.hands.right);
        assert_eq!(c.palm_left, vec![8, 9, 10, 11]);
        assert_eq!(ContactFile::parse(&c.to_text()).unwrap(), c);
        assert!(ContactFile::parse("palm_left = 1").is_err());
    }
}
