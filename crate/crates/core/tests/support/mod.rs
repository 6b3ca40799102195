#![allow(dead_code)]

pub mod data;
pub mod federation;
pub mod gradcheck;
pub mod wire;
