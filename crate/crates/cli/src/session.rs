use std::net::IpAddr;
use std::time::SystemTime;

use dashmap::DashMap;
use rand::RngCore;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    pub terminal: IpAddr,
    pub language: String,
    pub created: SystemTime,
}

/// Bearer-token sessions; a user may hold any number of them.
#[derive(Debug, Default)]
pub struct Sessions {
    by_token: DashMap<String, Session>,
}

impl Sessions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Issues a session with a fresh 128-bit token.
    pub fn issue(&self, user_id: &str, terminal: IpAddr, language: &str) -> Session {
        let mut bytes = [0u8; 16];
        rand::rng().fill_bytes(&mut bytes);
        let session = Session {
            token: hex::encode(bytes),
            user_id: user_id.to_string(),
            terminal,
            language: language.to_string(),
            created: SystemTime::now(),
        };
        self.by_token.insert(session.token.clone(), session.clone());
        session
    }

    pub fn get(&self, token: &str) -> Option<Session> {
        self.by_token.get(token).map(|s| s.clone())
    }

    pub fn revoke(&self, token: &str) -> bool {
        self.by_token.remove(token).is_some()
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_distinct_and_128_bit() {
        let sessions = Sessions::new();
        let a = sessions.issue("u", IpAddr::from([127, 0, 0, 1]), "en");
        let b = sessions.issue("u", IpAddr::from([127, 0, 0, 1]), "en");
        assert_ne!(a.token, b.token);
        assert_eq!(a.token.len(), 32);
        assert_eq!(sessions.get(&a.token).unwrap().user_id, "u");
        assert!(sessions.revoke(&a.token));
        assert!(sessions.get(&a.token).is_none());
        assert_eq!(sessions.len(), 1);
    }
}
