//! One-time case tokens and pseudonymous case reports.
//!
//! Authorities mint tokens without entering any personal data. A device that
//! redeems a token becomes a case report; the token is only marked consumed
//! and nothing records which device consumed it.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::config::CasesConfig;
use crate::ids::AuthorityId;
use crate::ids::DeviceId;
use crate::time::{date_of, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CaseKind {
    Positive,
    Contact,
}

const BASE32: &[u8; 32] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ234567";

/// 16 base32 characters (80 bits) grouped `XXXX-XXXX-XXXX-XXXX`.
pub fn generate_token_string<R: RngCore + ?Sized>(rng: &mut R) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    let mut out = String::with_capacity(19);
    for (i, b) in bytes.iter().enumerate() {
        if i > 0 && i % 4 == 0 {
            out.push('-');
        }
        out.push(BASE32[(b & 31) as usize] as char);
    }
    out
}

/// Canonical form used for lookup: upper case, grouping restored, so that
/// users may type the token with or without dashes.
pub fn normalize_token(input: &str) -> Option<String> {
    let chars: Vec<char> = input
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '-')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    if chars.len() != 16 || !chars.iter().all(|c| BASE32.contains(&(*c as u8))) {
        return None;
    }
    let mut out = String::with_capacity(19);
    for (i, c) in chars.into_iter().enumerate() {
        if i > 0 && i % 4 == 0 {
            out.push('-');
        }
        out.push(c);
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseToken {
    pub token: String,
    pub kind: CaseKind,
    pub authority: AuthorityId,
    pub issued_at: Timestamp,
    pub expires_at: Timestamp,
    pub consumed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: Uuid,
    pub device: DeviceId,
    pub kind: CaseKind,
    /// Present for positive reports only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symptom_start: Option<NaiveDate>,
    pub reported_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaseError {
    #[error("authority is not authorised")]
    UnauthorizedAuthority,
    #[error("unknown token")]
    UnknownToken,
    #[error("token already consumed")]
    AlreadyConsumed,
    #[error("token expired")]
    Expired,
    #[error("token issued outside the device's community")]
    WrongCommunityScope,
    #[error("symptom start date is missing or in the future")]
    InvalidSymptomDate,
    #[error("unauthenticated reports are disabled")]
    UnauthenticatedDisabled,
}

impl CaseError {
    pub fn reason(&self) -> &'static str {
        match self {
            CaseError::UnauthorizedAuthority => "unauthorized-authority",
            CaseError::UnknownToken => "unknown-token",
            CaseError::AlreadyConsumed => "already-consumed",
            CaseError::Expired => "expired",
            CaseError::WrongCommunityScope => "wrong-community-scope",
            CaseError::InvalidSymptomDate => "invalid-symptom-date",
            CaseError::UnauthenticatedDisabled => "unauthenticated-disabled",
        }
    }
}

/// Issued tokens keyed by their canonical string. Consumption is a flag on
/// the token itself; there is no redeemer column.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TokenStore {
    tokens: BTreeMap<String, CaseToken>,
}

impl TokenStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&CaseToken> {
        normalize_token(token).and_then(|t| self.tokens.get(&t))
    }

    pub fn tokens(&self) -> impl Iterator<Item = &CaseToken> {
        self.tokens.values()
    }

    /// Resolves a shared secret to the authority it authenticates.
    pub fn authenticate(cfg: &CasesConfig, secret: &str) -> Result<AuthorityId, CaseError> {
        cfg.authorities
            .iter()
            .find(|a| a.secret == secret)
            .map(|a| AuthorityId(a.id.clone()))
            .ok_or(CaseError::UnauthorizedAuthority)
    }

    pub fn issue_tokens<R: RngCore + ?Sized>(
        &mut self,
        cfg: &CasesConfig,
        authority: &AuthorityId,
        kind: CaseKind,
        count: usize,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Vec<CaseToken>, CaseError> {
        if !cfg.authorities.iter().any(|a| a.id == authority.0) {
            return Err(CaseError::UnauthorizedAuthority);
        }
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let token = generate_token_string(rng);
            if self.tokens.contains_key(&token) {
                continue;
            }
            let t = CaseToken {
                token: token.clone(),
                kind,
                authority: authority.clone(),
                issued_at: now,
                expires_at: now + cfg.token_validity_secs,
                consumed: false,
            };
            self.tokens.insert(token, t.clone());
            out.push(t);
        }
        Ok(out)
    }

    /// Checks redeemability without consuming.
    pub fn check(&self, token: &str, community: Option<&AuthorityId>, now: Timestamp) -> Result<&CaseToken, CaseError> {
        let t = self.get(token).ok_or(CaseError::UnknownToken)?;
        if t.consumed {
            return Err(CaseError::AlreadyConsumed);
        }
        if now >= t.expires_at {
            return Err(CaseError::Expired);
        }
        if community.is_some_and(|c| *c != t.authority) {
            return Err(CaseError::WrongCommunityScope);
        }
        Ok(t)
    }

    /// Marks `token` consumed and returns its kind. Exactly one call per
    /// token can succeed.
    pub fn consume(&mut self, token: &str, community: Option<&AuthorityId>, now: Timestamp) -> Result<CaseKind, CaseError> {
        let kind = self.check(token, community, now)?.kind;
        let key = normalize_token(token).expect("checked");
        self.tokens.get_mut(&key).expect("checked").consumed = true;
        Ok(kind)
    }

    /// Inserts or replaces a token (replay).
    pub fn restore(&mut self, t: CaseToken) {
        self.tokens.insert(t.token.clone(), t);
    }
}

/// Builds the report for a successful redemption. Contact reports carry no
/// symptom date; positive reports need one not later than the report day.
pub fn make_report<R: RngCore + ?Sized>(
    device: DeviceId,
    kind: CaseKind,
    symptom_start: Option<NaiveDate>,
    now: Timestamp,
    rng: &mut R,
) -> Result<CaseReport, CaseError> {
    let symptom_start = match kind {
        CaseKind::Positive => match symptom_start {
            Some(d) if d <= date_of(now) => Some(d),
            _ => return Err(CaseError::InvalidSymptomDate),
        },
        CaseKind::Contact => None,
    };
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    Ok(CaseReport {
        case_id: uuid::Builder::from_random_bytes(bytes).into_uuid(),
        device,
        kind,
        symptom_start,
        reported_at: now,
    })
}

/// Token + report in one step: validates the symptom date, consumes the
/// token and produces an unlinked report.
pub fn redeem<R: RngCore + ?Sized>(
    store: &mut TokenStore,
    token: &str,
    device: DeviceId,
    community: Option<&AuthorityId>,
    symptom_start: Option<NaiveDate>,
    now: Timestamp,
    rng: &mut R,
) -> Result<CaseReport, CaseError> {
    let kind = store.check(token, community, now)?.kind;
    if kind == CaseKind::Positive && !symptom_start.is_some_and(|d| d <= date_of(now)) {
        return Err(CaseError::InvalidSymptomDate);
    }
    store.consume(token, community, now)?;
    make_report(device, kind, symptom_start, now, rng)
}

/// Probability that at least one of `n_tokens` independently entered tokens
/// (each entered with probability `p_each`) reaches the system.
pub fn amplification_probability(n_tokens: u32, p_each: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p_each), "p_each must lie in [0, 1]");
    1.0 - (1.0 - p_each).powi(n_tokens as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AuthorityConfig;
    use crate::time::{HOUR, DAY};
    use rand::SeedableRng;
    use std::collections::HashSet;

    const NOW: Timestamp = 1_600_000_000;

    fn cfg() -> CasesConfig {
        CasesConfig {
            authorities: vec![
                AuthorityConfig { id: "authA".into(), secret: "sa".into() },
                AuthorityConfig { id: "authB".into(), secret: "sb".into() },
            ],
            ..Default::default()
        }
    }

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(4)
    }

    fn auth(s: &str) -> AuthorityId {
        AuthorityId(s.into())
    }

    fn today() -> NaiveDate {
        date_of(NOW)
    }

    #[test]
    fn issue_three_positive() {
        let mut s = TokenStore::new();
        let toks = s.issue_tokens(&cfg(), &auth("authA"), CaseKind::Positive, 3, NOW, &mut rng()).unwrap();
        assert_eq!(toks.len(), 3);
        assert_eq!(toks.iter().map(|t| &t.token).collect::<HashSet<_>>().len(), 3);
        assert!(toks.iter().all(|t| !t.consumed && t.expires_at == NOW + 72 * HOUR));
    }

    #[test]
    fn contact_kind_and_format() {
        let mut s = TokenStore::new();
        let t = &s.issue_tokens(&cfg(), &auth("authA"), CaseKind::Contact, 1, NOW, &mut rng()).unwrap()[0];
        assert_eq!(t.kind, CaseKind::Contact);
        assert_eq!(t.token.len(), 19);
        assert_eq!(t.token.split('-').count(), 4);
        assert_eq!(normalize_token(&t.token.replace('-', "").to_lowercase()).as_deref(), Some(t.token.as_str()));
    }

    #[test]
    fn unknown_authority_rejected() {
        let mut s = TokenStore::new();
        let err = s.issue_tokens(&cfg(), &auth("mallory"), CaseKind::Positive, 1, NOW, &mut rng());
        assert_eq!(err.unwrap_err(), CaseError::UnauthorizedAuthority);
        assert_eq!(TokenStore::authenticate(&cfg(), "sb").unwrap(), auth("authB"));
        assert!(TokenStore::authenticate(&cfg(), "nope").is_err());
    }

    #[test]
    fn hundred_thousand_tokens_without_collision() {
        let mut r = rand::rng();
        let mut seen = HashSet::new();
        let dups = (0..100_000).filter(|_| !seen.insert(generate_token_string(&mut r))).count();
        assert_eq!(dups, 0);
    }

    #[test]
    fn redeem_once() {
        let mut r = rng();
        let mut s = TokenStore::new();
        let t = s.issue_tokens(&cfg(), &auth("authA"), CaseKind::Positive, 1, NOW, &mut r).unwrap()[0].clone();
        let dev = DeviceId::random(&mut r);
        let rep = redeem(&mut s, &t.token, dev, None, Some(today()), NOW + HOUR, &mut r).unwrap();
        assert_eq!(rep.kind, CaseKind::Positive);
        assert_eq!(rep.device, dev);
        let again = redeem(&mut s, &t.token, dev, None, Some(today()), NOW + HOUR, &mut r);
        assert_eq!(again.unwrap_err(), CaseError::AlreadyConsumed);
    }

    #[test]
    fn redeem_errors() {
        let mut r = rng();
        let mut s = TokenStore::new();
        let t = s.issue_tokens(&cfg(), &auth("authA"), CaseKind::Positive, 1, NOW, &mut r).unwrap()[0].clone();
        let dev = DeviceId::random(&mut r);
        assert_eq!(
            redeem(&mut s, "AAAA-AAAA-AAAA-AAAA", dev, None, Some(today()), NOW, &mut r).unwrap_err(),
            CaseError::UnknownToken
        );
        assert_eq!(
            redeem(&mut s, &t.token, dev, None, Some(today()), NOW + 72 * HOUR, &mut r).unwrap_err(),
            CaseError::Expired
        );
        assert_eq!(
            redeem(&mut s, &t.token, dev, Some(&auth("authB")), Some(today()), NOW, &mut r).unwrap_err(),
            CaseError::WrongCommunityScope
        );
        assert_eq!(
            redeem(&mut s, &t.token, dev, None, Some(date_of(NOW + 2 * DAY)), NOW, &mut r).unwrap_err(),
            CaseError::InvalidSymptomDate
        );
        // failed attempts leave the token redeemable
        assert!(redeem(&mut s, &t.token, dev, Some(&auth("authA")), Some(today()), NOW, &mut r).is_ok());
    }

    #[test]
    fn contact_reports_drop_symptom_date() {
        let mut r = rng();
        let mut s = TokenStore::new();
        let t = s.issue_tokens(&cfg(), &auth("authA"), CaseKind::Contact, 1, NOW, &mut r).unwrap()[0].clone();
        let rep = redeem(&mut s, &t.token, DeviceId::random(&mut r), None, Some(today()), NOW, &mut r).unwrap();
        assert_eq!(rep.symptom_start, None);
    }

    #[test]
    fn report_has_no_token_field() {
        let mut r = rng();
        let rep = make_report(DeviceId::random(&mut r), CaseKind::Positive, Some(today()), NOW, &mut r).unwrap();
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json.get("token").is_none());
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["case_id", "device", "kind", "reported_at", "symptom_start"]);
    }

    #[test]
    fn amplification_values() {
        let p = amplification_probability(11, 0.2);
        assert!((p - (1.0 - 0.8f64.powi(11))).abs() < 1e-12);
        assert!((p - 0.9141).abs() < 1e-4);
        assert!(p > 0.9);
        assert_eq!(amplification_probability(0, 0.3), 0.0);
        assert_eq!(amplification_probability(5, 1.0), 1.0);
    }

    #[test]
    #[should_panic]
    fn amplification_rejects_bad_probability() {
        amplification_probability(3, 1.5);
    }
}
