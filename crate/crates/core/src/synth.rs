//! Seeded synthetic data: social snapshots with planted ground truth,
//! participant records for screening, and correlated samples.
//!
//! Each pair carries two latent tie strengths in [0, 1], one for online
//! and one for offline contact, drawn from a shared base so they
//! correlate. Online strength sets the number of mutual posts and Q1 is a
//! banding of that count; offline strength does the same for common photos
//! and Q2, and raises the odds of shared places, schools and employers.
//! Weak ties are more likely to carry planted abuse, which drives Q3..Q5.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Action, AgreementAnswer, DecisionKind, FrequencyAnswer, IgnoreReason, ResponseSet,
};
use crate::features::{PhotoRecord, PostRecord, SocialSnapshot, UserProfile};
use crate::learning::PairLabel;
use crate::quality::{BogusResponse, ParticipantRecord, QualityCheck, QualityConfig, Timing};
use crate::rules::RuleTable;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationParams {
    pub user_count: usize,
    /// Friends per participant, drawn uniformly from `min..=max`.
    pub friends_per_user: (usize, usize),
    pub seed: u64,
    /// Chance that a Q1/Q2 answer is replaced by a random one.
    pub q12_noise: f64,
    /// Target share of pairs with planted abuse.
    pub abuse_rate: f64,
    /// Chance a user accepts each kind of suggestion.
    pub accept: AcceptRates,
    /// Share of accepted unfriend-or-sandbox suggestions that pick sandbox.
    pub sandbox_share: f64,
    pub sandbox_enabled: bool,
    /// Forces both tie strengths of every pair to this value.
    pub tie_override: Option<f64>,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams {
            user_count: 57,
            friends_per_user: (20, 30),
            seed: 0,
            q12_noise: 0.0,
            abuse_rate: 0.34,
            accept: AcceptRates::default(),
            sandbox_share: 0.6,
            sandbox_enabled: true,
            tie_override: None,
        }
    }
}

impl PopulationParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let (lo, hi) = self.friends_per_user;
        if lo > hi {
            return Err(SynthError::InvalidParams(format!(
                "friends_per_user range {lo}..={hi} is empty"
            )));
        }
        for (name, p) in [
            ("q12_noise", self.q12_noise),
            ("abuse_rate", self.abuse_rate),
            ("accept.unfriend", self.accept.unfriend),
            ("accept.unfriend_or_sandbox", self.accept.unfriend_or_sandbox),
            ("accept.restrict", self.accept.restrict),
            ("accept.unfollow", self.accept.unfollow),
            ("sandbox_share", self.sandbox_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InvalidParams(format!("{name} must be in [0, 1]")));
            }
        }
        if let Some(t) = self.tie_override {
            if !(0.0..=1.0).contains(&t) {
                return Err(SynthError::InvalidParams("tie_override must be in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceptRates {
    pub unfriend: f64,
    pub unfriend_or_sandbox: f64,
    pub restrict: f64,
    pub unfollow: f64,
}

impl Default for AcceptRates {
    fn default() -> Self {
        AcceptRates {
            unfriend: 0.3,
            unfriend_or_sandbox: 0.9,
            restrict: 0.85,
            unfollow: 0.85,
        }
    }
}

impl AcceptRates {
    pub fn for_action(&self, action: Action) -> f64 {
        match action {
            Action::Unfriend => self.unfriend,
            Action::UnfriendOrSandbox => self.unfriend_or_sandbox,
            Action::Restrict => self.restrict,
            Action::Unfollow => self.unfollow,
            Action::Nop => 0.0,
        }
    }
}

/// Planted truth for one (participant, friend) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(flatten)]
    pub label: PairLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ignore_reason: Option<IgnoreReason>,
    pub suggested: Action,
    pub tie_online: f64,
    pub tie_offline: f64,
    pub abusive: bool,
}

#[derive(Debug, Clone)]
pub struct Population {
    pub params: PopulationParams,
    pub snapshot: SocialSnapshot,
    pub participants: Vec<String>,
    pub truth: Vec<GroundTruth>,
}

impl Population {
    pub fn labels(&self) -> Vec<PairLabel> {
        self.truth.iter().map(|t| t.label.clone()).collect()
    }

    pub fn truth_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.truth {
            out.push_str(&serde_json::to_string(t).expect("truth serializes"));
            out.push('\n');
        }
        out
    }

    pub fn abuse_share(&self) -> f64 {
        self.truth.iter().filter(|t| t.abusive).count() as f64 / self.truth.len().max(1) as f64
    }
}

/// Upper bounds (exclusive) of the Never, Don't Remember, Not Anymore and
/// Occasionally bands for mutual post counts; anything above is Frequently.
pub const POST_BANDS: [u32; 4] = [4, 8, 14, 26];
/// Same for common photo counts.
pub const PHOTO_BANDS: [u32; 4] = [2, 4, 7, 13];

const MAX_POSTS: f64 = 40.0;
const MAX_PHOTOS: f64 = 20.0;

pub fn band(count: u32, bands: [u32; 4]) -> FrequencyAnswer {
    use FrequencyAnswer as F;
    const ORDER: [FrequencyAnswer; 5] = [
        F::Never,
        F::DontRemember,
        F::NotAnymore,
        F::Occasionally,
        F::Frequently,
    ];
    let i = bands.iter().position(|&b| count < b).unwrap_or(4);
    ORDER[i]
}

const CITIES: [&str; 12] = [
    "Miami", "Boston", "Austin", "Denver", "Seattle", "Chicago", "Atlanta", "Phoenix", "Portland",
    "Detroit", "Tampa", "Omaha",
];

fn pick_place(rng: &mut ChaCha8Rng, shared: Option<&String>, p_share: f64) -> Option<String> {
    if rng.random_bool(0.08) {
        return None;
    }
    match shared {
        Some(s) if rng.random_bool(p_share) => Some(s.clone()),
        _ => Some(CITIES.choose(rng).expect("non-empty").to_string()),
    }
}

fn pick_set(rng: &mut ChaCha8Rng, own: &BTreeSet<String>, p_share: f64, pool: &str, pool_size: usize) -> BTreeSet<String> {
    let mut set: BTreeSet<String> = own.iter().filter(|_| rng.random_bool(p_share)).cloned().collect();
    for _ in 0..rng.random_range(0..=2) {
        set.insert(format!("{pool}-{}", rng.random_range(0..pool_size)));
    }
    set
}

fn agreement(rng: &mut ChaCha8Rng, p_agree: f64, p_unknown: f64) -> AgreementAnswer {
    let u: f64 = rng.random();
    if u < p_agree {
        AgreementAnswer::Agree
    } else if u < p_agree + p_unknown {
        AgreementAnswer::DontKnow
    } else {
        AgreementAnswer::Disagree
    }
}

fn frequency_with_noise(rng: &mut ChaCha8Rng, exact: FrequencyAnswer, noise: f64) -> FrequencyAnswer {
    if noise > 0.0 && rng.random_bool(noise) {
        *FrequencyAnswer::ALL.choose(rng).expect("non-empty")
    } else {
        exact
    }
}

struct UserShard {
    users: Vec<UserProfile>,
    posts: Vec<PostRecord>,
    photos: Vec<PhotoRecord>,
    truth: Vec<GroundTruth>,
}

/// Generates a population of participants, each with their own friends.
/// Participants are independent: participant `u` draws from its own
/// stream of the seeded generator, so users are built in parallel.
pub fn generate_population(params: &PopulationParams) -> Result<Population, SynthError> {
    params.validate()?;
    let table = RuleTable::canonical(params.sandbox_enabled);
    let shards: Vec<UserShard> = (0..params.user_count)
        .into_par_iter()
        .map(|u| generate_user(params, &table, u))
        .collect();

    let mut users = Vec::new();
    let mut posts = Vec::new();
    let mut photos = Vec::new();
    let mut truth = Vec::new();
    let mut participants = Vec::new();
    for shard in shards {
        participants.push(shard.users[0].id.clone());
        users.extend(shard.users);
        posts.extend(shard.posts);
        photos.extend(shard.photos);
        truth.extend(shard.truth);
    }
    let snapshot = SocialSnapshot::new(users, posts, photos)
        .expect("generator output satisfies snapshot integrity");
    Ok(Population {
        params: params.clone(),
        snapshot,
        participants,
        truth,
    })
}

fn generate_user(params: &PopulationParams, table: &RuleTable, u: usize) -> UserShard {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(u as u64);
    let base = Beta::new(1.2, 1.8).expect("valid shape");
    let jitter = Normal::new(0.0, 0.12).expect("valid sigma");

    let mut posts = Vec::new();
    let mut photos = Vec::new();
    let mut truth = Vec::new();

    let pid = format!("u{u:03}");
    let mut me = UserProfile::new(&pid);
    me.current_city = pick_place(&mut rng, None, 0.0);
    me.hometown = pick_place(&mut rng, None, 0.0);
    me.schools = pick_set(&mut rng, &BTreeSet::new(), 0.0, "school", 40);
    me.employers = pick_set(&mut rng, &BTreeSet::new(), 0.0, "employer", 60);

    let n = rng.random_range(params.friends_per_user.0..=params.friends_per_user.1);
    let mut friends: Vec<UserProfile> = Vec::with_capacity(n);
    let mut ties = Vec::with_capacity(n);
    for i in 0..n {
        let (t_on, t_off) = match params.tie_override {
            Some(t) => (t, t),
            None => {
                let z: f64 = base.sample(&mut rng);
                (
                    (z + jitter.sample(&mut rng)).clamp(0.0, 1.0),
                    (z + jitter.sample(&mut rng)).clamp(0.0, 1.0),
                )
            }
        };
        let mut f = UserProfile::new(format!("{pid}-f{i:02}"));
        f.current_city = pick_place(&mut rng, me.current_city.as_ref(), 0.1 + 0.6 * t_off);
        f.hometown = pick_place(&mut rng, me.hometown.as_ref(), 0.05 + 0.5 * t_off);
        f.schools = pick_set(&mut rng, &me.schools, 0.6 * t_off, "school", 40);
        f.employers = pick_set(&mut rng, &me.employers, 0.5 * t_off, "employer", 60);
        f.friend_ids.insert(pid.clone());
        me.friend_ids.insert(f.id.clone());
        friends.push(f);
        ties.push((t_on, t_off));
    }

    // friends of a participant know each other more often when both
    // are close to the participant
    for i in 0..n {
        for j in i + 1..n {
            let p = 0.05 + 0.5 * (ties[i].1 * ties[j].1).sqrt();
            if rng.random_bool(p.min(1.0)) {
                let (a, b) = (friends[i].id.clone(), friends[j].id.clone());
                friends[i].friend_ids.insert(b);
                friends[j].friend_ids.insert(a);
            }
        }
    }

    for (i, f) in friends.iter().enumerate() {
        let (t_on, t_off) = ties[i];
        let k = (t_on * MAX_POSTS).floor() as u32;
        for p in 0..k {
            let (author, commenter) = if rng.random_bool(0.5) {
                (&pid, &f.id)
            } else {
                (&f.id, &pid)
            };
            posts.push(PostRecord {
                post_id: format!("{}-p{p:02}", f.id),
                author_id: author.clone(),
                commenter_ids: BTreeSet::from([commenter.clone()]),
            });
        }
        // the friend's own posts, commented only by others
        if rng.random_bool(0.5) {
            let others: BTreeSet<String> = f
                .friend_ids
                .iter()
                .filter(|id| **id != pid)
                .take(3)
                .cloned()
                .collect();
            posts.push(PostRecord {
                post_id: format!("{}-solo", f.id),
                author_id: f.id.clone(),
                commenter_ids: others,
            });
        }

        let j = (t_off * MAX_PHOTOS).floor() as u32;
        for p in 0..j {
            photos.push(PhotoRecord {
                photo_id: format!("{}-ph{p:02}", f.id),
                tagged_ids: BTreeSet::from([pid.clone(), f.id.clone()]),
            });
        }

        let weakness = 1.0 - 0.5 * (t_on + t_off);
        let abusive = rng.random_bool((params.abuse_rate * 2.2 * weakness * weakness).min(1.0));
        let (hi, lo) = if abusive { (0.75, 0.05) } else { (0.06, 0.02) };
        let responses = ResponseSet {
            q1: frequency_with_noise(&mut rng, band(k, POST_BANDS), params.q12_noise),
            q2: frequency_with_noise(&mut rng, band(j, PHOTO_BANDS), params.q12_noise),
            q3: agreement(&mut rng, hi * (0.6 + 0.4 * weakness) + lo, 0.12),
            q4: agreement(&mut rng, hi * 0.8 * (0.6 + 0.4 * weakness) + lo, 0.12),
            q5: agreement(&mut rng, hi * 0.7 * (0.6 + 0.4 * weakness) + lo, 0.1),
        };
        let verdict = table
            .evaluate(&responses)
            .expect("canonical table is total");
        let (decision, ignore_reason) = if verdict.action == Action::Nop {
            (DecisionKind::Ignore, None)
        } else if rng.random_bool(params.accept.for_action(verdict.action)) {
            let kind = match verdict.action {
                Action::UnfriendOrSandbox if rng.random_bool(params.sandbox_share) => {
                    DecisionKind::Sandbox
                }
                Action::UnfriendOrSandbox | Action::Unfriend => DecisionKind::Unfriend,
                Action::Restrict => DecisionKind::Restrict,
                Action::Unfollow => DecisionKind::Unfollow,
                Action::Nop => unreachable!(),
            };
            (kind, None)
        } else {
            let reason = *IgnoreReason::ALL.choose(&mut rng).expect("non-empty");
            (DecisionKind::Ignore, Some(reason))
        };
        truth.push(GroundTruth {
            label: PairLabel {
                user_id: pid.clone(),
                friend_id: f.id.clone(),
                responses,
                decision,
            },
            ignore_reason,
            suggested: verdict.action,
            tie_online: t_on,
            tie_offline: t_off,
            abusive,
        });
    }

    let mut users = vec![me];
    users.extend(friends);
    UserShard {
        users,
        posts,
        photos,
        truth,
    }
}

/// Participant records with a known number of planted screening failures.
#[derive(Debug, Clone)]
pub struct ParticipantSample {
    pub records: Vec<ParticipantRecord>,
    /// Checks each violator was built to fail.
    pub planted: BTreeMap<String, Vec<QualityCheck>>,
}

pub fn generate_participants(
    count: usize,
    violators: usize,
    config: &QualityConfig,
    seed: u64,
) -> Result<ParticipantSample, SynthError> {
    if violators > count {
        return Err(SynthError::InvalidParams(format!(
            "{violators} violators out of {count} participants"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut rng);
    let bad: BTreeSet<usize> = order[..violators].iter().copied().collect();

    let floor = config.min_avg_response_seconds;
    let honest_q = [FrequencyAnswer::Never, FrequencyAnswer::DontRemember];
    let mut records = Vec::with_capacity(count);
    let mut planted = BTreeMap::new();
    for i in 0..count {
        let id = format!("p{i:03}");
        let checks: Vec<QualityCheck> = if bad.contains(&i) {
            let all = [QualityCheck::AttentionCheck, QualityCheck::BogusFriend, QualityCheck::Timing];
            let mask = rng.random_range(1..8u8);
            all.iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, c)| *c)
                .collect()
        } else {
            Vec::new()
        };
        let fails = |c| checks.contains(&c);

        let (lo, hi) = if fails(QualityCheck::Timing) {
            (0.2 * floor, 0.9 * floor)
        } else {
            (1.1 * floor, 5.0 * floor)
        };
        let mut timings = Vec::new();
        for f in 0..20 {
            for q in 1..=5u8 {
                timings.push(Timing {
                    friend_id: format!("{id}-f{f:02}"),
                    question: Some(q),
                    seconds: rng.random_range(lo..hi),
                });
            }
        }

        let mut bogus_responses = Vec::new();
        let bad_probe = config
            .bogus_friend_ids
            .iter()
            .nth(rng.random_range(0..config.bogus_friend_ids.len().max(1)))
            .cloned();
        for bogus in &config.bogus_friend_ids {
            let mut responses = ResponseSet {
                q1: *honest_q.choose(&mut rng).expect("non-empty"),
                q2: *honest_q.choose(&mut rng).expect("non-empty"),
                q3: agreement(&mut rng, 0.1, 0.6),
                q4: agreement(&mut rng, 0.1, 0.6),
                q5: agreement(&mut rng, 0.1, 0.6),
            };
            if fails(QualityCheck::BogusFriend) && bad_probe.as_ref() == Some(bogus) {
                responses.q1 = FrequencyAnswer::Occasionally;
            }
            bogus_responses.push(BogusResponse {
                friend_id: bogus.clone(),
                responses,
            });
        }

        if !checks.is_empty() {
            planted.insert(id.clone(), checks.clone());
        }
        records.push(ParticipantRecord {
            id,
            attention_passed: !fails(QualityCheck::AttentionCheck),
            timings,
            bogus_responses,
        });
    }
    Ok(ParticipantSample { records, planted })
}

/// Pairs from a bivariate normal with correlation `rho`.
pub fn correlated_pairs(n: usize, rho: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let side = (1.0 - rho * rho).max(0.0).sqrt();
    (0..n)
        .map(|_| {
            let a: f64 = std.sample(&mut rng);
            let b: f64 = std.sample(&mut rng);
            (a, rho * a + side * b)
        })
        .collect()
}
