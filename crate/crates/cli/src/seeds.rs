//! Seed derivation: every stage draws from `global_seed ^ stage_tag`, so one
//! config seed pins the whole pipeline while stages stay decorrelated.

pub const TAG_SIMULATE: u64 = 0xA1;
pub const TAG_SPLIT: u64 = 0xB2;
pub const TAG_SURROGATE: u64 = 0xC3;
pub const TAG_ENV: u64 = 0xD4;
pub const TAG_AGENT: u64 = 0xE5;
pub const TAG_GENERATE: u64 = 0xF6;
pub const TAG_BAYESOPT: u64 = 0x17;

pub fn derive(global_seed: u64, tag: u64) -> u64 {
    global_seed ^ tag
}
