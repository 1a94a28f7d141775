use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical::{sha256_hex, to_canonical_string, CanonicalFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// An encoded frame payload attached to a user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub media_type: String,
    /// SHA-256 of `data`, hex.
    pub digest: String,
    #[serde(with = "base64_bytes")]
    pub data: Vec<u8>,
}

impl ImageRef {
    pub fn new(media_type: impl Into<String>, data: Vec<u8>) -> Self {
        ImageRef {
            media_type: media_type.into(),
            digest: sha256_hex(&data),
            data,
        }
    }

    pub fn data_url(&self) -> String {
        format!(
            "data:{};base64,{}",
            self.media_type,
            base64::engine::general_purpose::STANDARD.encode(&self.data)
        )
    }
}

mod base64_bytes {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(text.as_bytes())
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ImageRef>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, text: text.into(), images: Vec::new() }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, text: text.into(), images: Vec::new() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, text: text.into(), images: Vec::new() }
    }

    pub fn with_images(mut self, images: impl IntoIterator<Item = ImageRef>) -> Self {
        self.images.extend(images);
        self
    }
}

/// A chat-completions request as sent to a transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    /// JSON form with image payloads replaced by their digests.
    pub fn canonical_value(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let images: Vec<Value> = m
                    .images
                    .iter()
                    .map(|i| json!({"digest": i.digest, "media_type": i.media_type}))
                    .collect();
                json!({"role": m.role, "text": m.text, "images": images})
            })
            .collect();
        let mut value = json!({"model": self.model, "messages": messages});
        if let Some(t) = self.temperature {
            value["temperature"] = json!(t);
        }
        if let Some(m) = self.max_tokens {
            value["max_tokens"] = json!(m);
        }
        value
    }

    /// Content hash of the canonicalized request.
    pub fn request_hash(&self) -> String {
        let text = to_canonical_string(&self.canonical_value(), CanonicalFormat::COMPACT);
        sha256_hex(text.as_bytes())
    }

    /// OpenAI-style chat-completions body.
    pub fn wire_body(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                if m.images.is_empty() {
                    json!({"role": m.role, "content": m.text})
                } else {
                    let mut parts = vec![json!({"type": "text", "text": m.text})];
                    parts.extend(m.images.iter().map(|i| {
                        json!({"type": "image_url", "image_url": {"url": i.data_url()}})
                    }));
                    json!({"role": m.role, "content": parts})
                }
            })
            .collect();
        let mut body = json!({"model": self.model, "messages": messages});
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = self.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }
}
