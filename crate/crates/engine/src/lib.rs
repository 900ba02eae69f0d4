//! Model-facing half of the toolkit: the chat gateway, annotation sessions,
//! judges, ground-truth oracles and manifest batch runs.

pub mod gateway;
pub mod judge;
pub mod oracle;
pub mod run;
pub mod session;

pub use gateway::{ChatMessage, ChatModel, GatewayError, HttpModel, MockModel, MockReply, Part, ProviderConfig, ProviderRegistry, Role};
pub use session::{Session, SessionError, SessionEvent, SessionOptions, SessionStatus, TurnFlag, TurnKind, TurnRecord};
