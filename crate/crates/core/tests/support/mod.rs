pub mod dd;
pub mod fixtures;
pub mod oracle;
