use std::fmt;
use std::sync::Arc;

use image::RgbImage;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// PNG-encoded image with a name for transcripts. Cloning shares the bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageRef {
    pub name: String,
    png: Arc<[u8]>,
}

impl ImageRef {
    pub fn from_png(name: impl Into<String>, png: Vec<u8>) -> Self {
        Self { name: name.into(), png: png.into() }
    }

    pub fn from_rgb(name: impl Into<String>, img: &RgbImage) -> Self {
        Self::from_png(name, crate::marks::encode_png(img))
    }

    pub fn png(&self) -> &[u8] {
        &self.png
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.png))
    }

    pub fn decode(&self) -> image::ImageResult<RgbImage> {
        Ok(image::load_from_memory_with_format(&self.png, image::ImageFormat::Png)?.to_rgb8())
    }
}

impl fmt::Debug for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageRef({}, {} bytes)", self.name, self.png.len())
    }
}

/// Transcripts record the image name and digest, never the bytes.
impl Serialize for ImageRef {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ImageRef", 2)?;
        st.serialize_field("image", &self.name)?;
        st.serialize_field("sha256", &self.sha256())?;
        st.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Part {
    Text(String),
    Image(ImageRef),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(parts: Vec<Part>) -> Self {
        Self { role: Role::User, parts }
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Text(t) => Some(t.as_str()),
            Part::Image(_) => None,
        })
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.parts.iter().filter_map(|p| match p {
            Part::Image(i) => Some(i),
            Part::Text(_) => None,
        })
    }
}

/// All text parts of all messages joined by newlines.
pub fn request_text(messages: &[Message]) -> String {
    messages.iter().flat_map(|m| m.texts()).collect::<Vec<_>>().join("\n")
}

/// The last text part of the last message that has one.
pub fn query_text(messages: &[Message]) -> &str {
    messages
        .iter()
        .rev()
        .find_map(|m| m.texts().last())
        .unwrap_or("")
}
