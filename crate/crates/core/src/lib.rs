pub mod confirm;
pub mod error;
pub mod family;
pub mod types;
pub mod tables;
pub mod forest;
pub mod adaptive;
pub mod oracle;
pub mod data;
pub mod experiment;
pub mod verify;
