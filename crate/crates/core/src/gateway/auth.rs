//! HTTP Basic credentials against salted SHA-256 password hashes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::RngCore;
use sha2::{Digest, Sha256};

use super::store::User;

fn digest(salt: &[u8], password: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt);
    hasher.update(password.as_bytes());
    hex::encode(hasher.finalize())
}

impl User {
    pub fn new(name: impl Into<String>, password: &str) -> Self {
        let mut salt = [0u8; 16];
        rand::rng().fill_bytes(&mut salt);
        Self {
            name: name.into(),
            salt: hex::encode(salt),
            password_hash: digest(&salt, password),
        }
    }

    pub fn verify(&self, password: &str) -> bool {
        let Ok(salt) = hex::decode(&self.salt) else {
            return false;
        };
        digest(&salt, password) == self.password_hash
    }
}

/// Splits an `Authorization: Basic ...` header value into user and password.
pub fn parse_basic(header: &str) -> Option<(String, String)> {
    let (scheme, encoded) = header.trim().split_once(' ')?;
    if !scheme.eq_ignore_ascii_case("basic") {
        return None;
    }
    let decoded = STANDARD.decode(encoded.trim()).ok()?;
    let text = String::from_utf8(decoded).ok()?;
    let (user, password) = text.split_once(':')?;
    Some((user.to_owned(), password.to_owned()))
}

pub fn basic_header(user: &str, password: &str) -> String {
    format!("Basic {}", STANDARD.encode(format!("{user}:{password}")))
}

/// The user name when `header` carries valid credentials for one of `users`.
pub fn authenticate<'a>(users: &'a [User], header: Option<&str>) -> Option<&'a str> {
    let (name, password) = parse_basic(header?)?;
    users
        .iter()
        .find(|u| u.name == name && u.verify(&password))
        .map(|u| u.name.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_round_trip() {
        let header = basic_header("admin", "s3:cret");
        assert_eq!(header, "Basic YWRtaW46czM6Y3JldA==");
        assert_eq!(
            parse_basic(&header),
            Some(("admin".into(), "s3:cret".into()))
        );
        assert_eq!(parse_basic("Bearer abc"), None);
        assert_eq!(parse_basic("Basic !!!"), None);
    }

    #[test]
    fn salted_hashes_verify() {
        let a = User::new("admin", "pw");
        let b = User::new("admin", "pw");
        assert_ne!(a.salt, b.salt);
        assert!(a.verify("pw"));
        assert!(!a.verify("pw2"));
        let users = vec![a];
        assert_eq!(authenticate(&users, Some(&basic_header("admin", "pw"))), Some("admin"));
        assert_eq!(authenticate(&users, Some(&basic_header("admin", "no"))), None);
        assert_eq!(authenticate(&users, Some(&basic_header("eve", "pw"))), None);
        assert_eq!(authenticate(&users, None), None);
    }
}
