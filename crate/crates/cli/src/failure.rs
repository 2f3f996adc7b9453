//! Machine-readable error output.

use serde::Serialize;

use crate::run::Diverged;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub kind: &'static str,
    pub message: String,
    /// Outermost context first.
    pub chain: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_checkpoint: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ErrorJson {
    pub error: ErrorBody,
}

fn kind_of(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<Diverged>() {
            return "diverged";
        }
        if let Some(e) = cause.downcast_ref::<ired_core::Error>() {
            return match e {
                ired_core::Error::Diverged { .. } | ired_core::Error::NonFiniteEnergy { .. } => "diverged",
                ired_core::Error::Config(_)
                | ired_core::Error::ModelSpec(_)
                | ired_core::Error::Schedule(_)
                | ired_core::Error::Level { .. } => "config",
                ired_core::Error::Task(_) => "task",
                ired_core::Error::ShapeMismatch { .. } | ired_core::Error::DataLength { .. } | ired_core::Error::Rank { .. } => {
                    "shape"
                }
                _ => "core",
            };
        }
        if cause.is::<toml::de::Error>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<serde_json::Error>() || cause.is::<csv::Error>() {
            return "format";
        }
    }
    "invalid"
}

pub fn to_json(err: &anyhow::Error) -> ErrorJson {
    let last_checkpoint = err
        .chain()
        .find_map(|c| c.downcast_ref::<Diverged>())
        .and_then(|d| d.last_checkpoint.as_ref())
        .map(|p| p.display().to_string());
    ErrorJson {
        error: ErrorBody {
            kind: kind_of(err),
            message: format!("{err:#}"),
            chain: err.chain().map(|c| c.to_string()).collect(),
            last_checkpoint,
        },
    }
}

pub fn usage_json(message: String) -> ErrorJson {
    ErrorJson {
        error: ErrorBody {
            kind: "usage",
            chain: vec![message.clone()],
            message,
            last_checkpoint: None,
        },
    }
}
