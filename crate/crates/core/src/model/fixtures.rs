//! The reference `.dadl` files shipped with the crate.

pub const MY_API: &str = include_str!("../../fixtures/my_api.dadl");
pub const SMART_PLUGS: &str = include_str!("../../fixtures/smart_plugs.dadl");
pub const HN_STORY: &str = include_str!("../../fixtures/hn_story.dadl");
