//! Symbolic key table.

use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

const NAMED: &[&str] = &[
    "enter", "tab", "escape", "space", "backspace", "alt", "shift", "ctrl", "up", "down", "left",
    "right", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9", "f10", "f11", "f12",
];

/// A keyboard key: an ASCII letter or digit, or a named key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Char(char),
    Named(&'static str),
}

impl Key {
    pub fn as_str(&self) -> String {
        self.to_string()
    }

    /// Dense code used across the C ABI: 0-25 letters, 26-35 digits, then
    /// named keys in table order.
    pub fn code(&self) -> u32 {
        match *self {
            Key::Char(c @ 'a'..='z') => c as u32 - 'a' as u32,
            Key::Char(c) => 26 + (c as u32 - '0' as u32),
            Key::Named(n) => 36 + NAMED.iter().position(|k| *k == n).expect("table key") as u32,
        }
    }

    pub fn from_code(code: u32) -> Option<Key> {
        match code {
            0..=25 => char::from_u32('a' as u32 + code).map(Key::Char),
            26..=35 => char::from_u32('0' as u32 + code - 26).map(Key::Char),
            _ => NAMED.get(code as usize - 36).map(|n| Key::Named(n)),
        }
    }

    pub fn all() -> impl Iterator<Item = Key> {
        ('a'..='z')
            .chain('0'..='9')
            .map(Key::Char)
            .chain(NAMED.iter().map(|n| Key::Named(n)))
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Char(c) => write!(f, "{c}"),
            Key::Named(n) => f.write_str(n),
        }
    }
}

impl FromStr for Key {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        let mut chars = lower.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if c.is_ascii_lowercase() || c.is_ascii_digit() {
                return Ok(Key::Char(c));
            }
        }
        NAMED
            .iter()
            .find(|n| **n == lower)
            .map(|n| Key::Named(n))
            .ok_or_else(|| format!("unknown key `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MouseButton {
    Left,
    Right,
    Middle,
}

impl MouseButton {
    pub fn as_str(&self) -> &'static str {
        match self {
            MouseButton::Left => "mouse_left",
            MouseButton::Right => "mouse_right",
            MouseButton::Middle => "mouse_middle",
        }
    }
}

impl fmt::Display for MouseButton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MouseButton {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mouse_left" => Ok(MouseButton::Left),
            "mouse_right" => Ok(MouseButton::Right),
            "mouse_middle" => Ok(MouseButton::Middle),
            other => Err(format!("unknown mouse button `{other}`")),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

string_serde!(Key);
string_serde!(MouseButton);
