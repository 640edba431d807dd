use thiserror::Error;

pub type Result<T> = std::result::Result<T, TawqError>;

#[derive(Debug, Error)]
pub enum TawqError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("non-finite {what} at {location}")]
    NonFinite { what: String, location: Location },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("encode error: {0}")]
    Encode(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint checksum mismatch")]
    Checksum,

    #[error("missing trace: {0}")]
    State(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where in the network a numeric failure happened.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Location {
    pub layer: Option<usize>,
    pub timestep: Option<usize>,
    pub param: Option<String>,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if let Some(l) = self.layer {
            parts.push(format!("layer {l}"));
        }
        if let Some(t) = self.timestep {
            parts.push(format!("timestep {t}"));
        }
        if let Some(p) = &self.param {
            parts.push(format!("parameter `{p}`"));
        }
        if parts.is_empty() {
            f.write_str("<unknown>")
        } else {
            f.write_str(&parts.join(", "))
        }
    }
}

impl TawqError {
    pub(crate) fn non_finite_at_step(what: &str, timestep: usize) -> Self {
        TawqError::NonFinite {
            what: what.to_string(),
            location: Location {
                timestep: Some(timestep),
                ..Location::default()
            },
        }
    }

    /// Attach a layer index to errors that carry a location.
    pub fn in_layer(self, layer: usize) -> Self {
        match self {
            TawqError::NonFinite { what, mut location } => {
                location.layer.get_or_insert(layer);
                TawqError::NonFinite { what, location }
            }
            TawqError::Shape(msg) => TawqError::Shape(format!("layer {layer}: {msg}")),
            other => other,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            TawqError::Config { .. } | TawqError::Param(_) => 2,
            TawqError::NonFinite { .. } => 4,
            _ => 3,
        }
    }
}
