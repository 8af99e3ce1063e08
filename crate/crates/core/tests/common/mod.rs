#![allow(dead_code)]

pub mod garbage;
pub mod oracle;
pub mod persist;
pub mod pipeline;
