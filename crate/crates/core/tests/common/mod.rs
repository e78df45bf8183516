#![allow(dead_code)]

use std::collections::BTreeSet;

use friend_audit_core::domain::{
    Action, AgreementAnswer as A, DecisionKind, FrequencyAnswer as F, IgnoreReason, ResponseSet,
};
use friend_audit_core::evaluation::ConfusionMatrix;
use friend_audit_core::features::{FeatureVector, PhotoRecord, PostRecord, SocialSnapshot, UserProfile};
use friend_audit_core::learning::{
    build_dataset, train_tree, Model, ModelBundle, TargetName, TreeParams,
};
use friend_audit_core::session::{
    allowed_decisions, AuditSession, Mode, NextStep, SessionConfig, SessionRequest, Status,
};
use friend_audit_core::synth::{generate_population, Population, PopulationParams};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// First-match reference written as a plain decision list over the five
/// answers. Returns the action and the 1-based index of the deciding rule.
pub fn reference_action(r: &ResponseSet, sandbox: bool) -> (Action, usize) {
    let n1 = r.q1 == F::Never;
    let n2 = r.q2 == F::Never;
    let a3 = r.q3 == A::Agree;
    let a4 = r.q4 == A::Agree;
    let a5 = r.q5 == A::Agree;
    let stranger = if sandbox {
        Action::UnfriendOrSandbox
    } else {
        Action::Unfriend
    };
    let rules: [(bool, Action); 16] = [
        (n1 && n2 && !a3 && !a4 && !a5, stranger),
        (n1 && n2, Action::Unfriend),
        (n1 && !n2 && a3 && a4 && a5, Action::Unfriend),
        (!n1 && n2 && a3 && a4 && a5, Action::Unfriend),
        (n1 && !n2 && a3 && !a4 && a5, Action::Unfriend),
        (n1 && !n2 && !a3 && a4 && a5, Action::Unfriend),
        (!n1 && n2 && a3 && !a4 && a5, Action::Unfriend),
        (!n1 && n2 && !a3 && a4 && a5, Action::Unfriend),
        (!n1 && !n2 && a3 && a4 && a5, Action::Unfriend),
        (!n1 && !n2 && a3 && !a4 && a5, Action::Unfriend),
        (!n1 && !n2 && !a3 && a4 && a5, Action::Unfriend),
        (!n1 && !n2 && a3 && a4 && !a5, Action::Restrict),
        (!n1 && !n2 && a3 && !a4 && !a5, Action::Restrict),
        (!n1 && !n2 && !a3 && a4 && !a5, Action::Restrict),
        (!n1 && !n2 && !a3 && !a4 && a5, Action::Unfollow),
        (true, Action::Nop),
    ];
    let i = rules.iter().position(|(hit, _)| *hit).expect("last rule always hits");
    (rules[i].1, i + 1)
}

fn same_place_naive(a: &Option<String>, b: &Option<String>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => {
            let (a, b) = (a.trim(), b.trim());
            !a.is_empty() && a.eq_ignore_ascii_case(b)
        }
        _ => false,
    }
}

/// Features by linear scans over the raw records, no indices.
pub fn reference_features(s: &SocialSnapshot, u: &str, f: &str) -> FeatureVector {
    let user = s.users().find(|p| p.id == u).unwrap();
    let friend = s.users().find(|p| p.id == f).unwrap();
    let mut mutual_posts = 0;
    for post in s.posts() {
        if post.author_id == u && post.commenter_ids.contains(f) {
            mutual_posts += 1;
        }
        if post.author_id == f && post.commenter_ids.contains(u) {
            mutual_posts += 1;
        }
    }
    let photos = s
        .photos()
        .iter()
        .filter(|p| p.tagged_ids.contains(u) && p.tagged_ids.contains(f))
        .count();
    let mutual_friends = s
        .users()
        .filter(|w| w.id != u && w.id != f)
        .filter(|w| w.friend_ids.contains(u) && w.friend_ids.contains(f))
        .count();
    let common = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.iter().filter(|x| b.contains(*x)).count();
    FeatureVector {
        mutual_post_count: mutual_posts,
        common_photo_count: photos as u32,
        mutual_friend_count: mutual_friends as u32,
        same_current_city: same_place_naive(&user.current_city, &friend.current_city),
        same_hometown: same_place_naive(&user.hometown, &friend.hometown),
        common_study_count: common(&user.schools, &friend.schools) as u32,
        common_work_count: common(&user.employers, &friend.employers) as u32,
    }
}

const PLACES: [&str; 5] = ["Miami", " miami", "MIAMI ", "Boston", ""];

/// Random snapshot over up to 8 users from a seed.
pub fn random_snapshot(seed: u64) -> SocialSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8);
    let ids: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let place = |rng: &mut ChaCha8Rng| -> Option<String> {
        if rng.random_bool(0.25) {
            None
        } else {
            Some(PLACES.choose(rng).unwrap().to_string())
        }
    };
    let subset = |rng: &mut ChaCha8Rng, pool: &[&str]| -> BTreeSet<String> {
        pool.iter().filter(|_| rng.random_bool(0.4)).map(|s| s.to_string()).collect()
    };
    let mut users: Vec<UserProfile> = ids
        .iter()
        .map(|id| {
            let mut p = UserProfile::new(id.clone());
            p.current_city = place(&mut rng);
            p.hometown = place(&mut rng);
            p.schools = subset(&mut rng, &["s1", "s2", "s3"]);
            p.employers = subset(&mut rng, &["e1", "e2"]);
            p
        })
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                users[i].friend_ids.insert(ids[j].clone());
                users[j].friend_ids.insert(ids[i].clone());
            }
        }
    }
    let posts = (0..rng.random_range(0..12))
        .map(|p| PostRecord {
            post_id: format!("p{p}"),
            author_id: ids.choose(&mut rng).unwrap().clone(),
            commenter_ids: ids.iter().filter(|_| rng.random_bool(0.3)).cloned().collect(),
        })
        .collect();
    let photos = (0..rng.random_range(0..8))
        .map(|p| PhotoRecord {
            photo_id: format!("ph{p}"),
            tagged_ids: {
                let mut t: BTreeSet<String> = ids.iter().filter(|_| rng.random_bool(0.4)).cloned().collect();
                if t.is_empty() {
                    t.insert(ids[0].clone());
                }
                t
            },
        })
        .collect();
    SocialSnapshot::new(users, posts, photos).unwrap()
}

pub fn arb_snapshot() -> impl Strategy<Value = SocialSnapshot> {
    any::<u64>().prop_map(random_snapshot)
}

pub fn friend_pairs(s: &SocialSnapshot) -> Vec<(String, String)> {
    s.users()
        .flat_map(|u| u.friend_ids.iter().map(move |f| (u.id.clone(), f.clone())))
        .collect()
}

pub const DECISION_CLASSES: [&str; 5] = ["unfriend", "sandbox", "restrict", "unfollow", "ignore"];

/// Decision confusion matrix reported for the first study; rows are actual
/// classes, columns predicted.
pub fn reported_decisions() -> ConfusionMatrix {
    ConfusionMatrix::from_counts(
        &DECISION_CLASSES,
        vec![
            vec![882, 13, 10, 13, 3],
            vec![103, 27, 1, 1, 3],
            vec![77, 1, 6, 0, 1],
            vec![79, 3, 0, 6, 0],
            vec![5, 0, 0, 0, 218],
        ],
    )
    .unwrap()
}

pub fn small_population(seed: u64) -> Population {
    generate_population(&PopulationParams {
        user_count: 4,
        friends_per_user: (6, 14),
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Shallow trees for every target, trained on a population's ground truth.
pub fn tree_bundle(pop: &Population) -> ModelBundle {
    let mut bundle = ModelBundle::default();
    for target in TargetName::ALL {
        let data = build_dataset(&pop.snapshot, &pop.labels(), target).unwrap();
        let params = TreeParams {
            max_depth: Some(5),
            min_leaf_size: 2,
        };
        bundle.insert(Model::Tree(train_tree(&data, params).unwrap()));
    }
    bundle
}

pub fn random_responses(rng: &mut ChaCha8Rng) -> ResponseSet {
    ResponseSet {
        q1: *F::ALL.choose(rng).unwrap(),
        q2: *F::ALL.choose(rng).unwrap(),
        q3: *A::ALL.choose(rng).unwrap(),
        q4: *A::ALL.choose(rng).unwrap(),
        q5: *A::ALL.choose(rng).unwrap(),
    }
}

fn timings(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..5).map(|_| rng.random_range(0.5..12.0)).collect()
}

/// Drives a session to completion with random answers and decisions,
/// sprinkling in rejected operations that must leave the log untouched.
pub fn fuzz_session(pop: &Population, bundle: &ModelBundle, seed: u64) -> AuditSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let participant = pop.participants.choose(&mut rng).unwrap().clone();
    let friends = pop.snapshot.user(&participant).unwrap().friend_ids.len();
    let mode = if rng.random_bool(0.25) {
        Mode::Wild
    } else {
        Mode::Questionnaire
    };
    let request = SessionRequest {
        session_id: format!("fuzz-{seed}"),
        participant_id: participant,
        mode,
        sample_size: rng.random_range(0..=friends),
        seed: rng.random(),
        attention_passed: rng.random_bool(0.9),
    };
    let config = SessionConfig {
        table: friend_audit_core::rules::RuleTable::canonical(rng.random_bool(0.7)),
        ..Default::default()
    };
    let mut session = AuditSession::create(&pop.snapshot, &request, &config).unwrap();
    if mode == Mode::Wild {
        session.run_wild(bundle, &pop.snapshot).unwrap();
    }
    while session.status() == Status::InProgress {
        let before = session.log().len();
        if rng.random_bool(0.1) {
            // a submission for somebody other than the head of the queue
            let other = session.friends().choose(&mut rng).unwrap().entry.friend_id.clone();
            let head = session.current_friend().unwrap().entry.friend_id.clone();
            if other != head {
                assert!(session.submit_responses(&other, random_responses(&mut rng), timings(&mut rng)).is_err());
                assert_eq!(session.log().len(), before);
            }
        }
        match session.next_step() {
            NextStep::Questionnaire { friend_id, .. } => {
                let r = random_responses(&mut rng);
                let t = timings(&mut rng);
                session.submit_responses(&friend_id, r, t).unwrap();
            }
            NextStep::Suggestion(s) => {
                if rng.random_bool(0.1) {
                    let wrong = *DecisionKind::ALL.choose(&mut rng).unwrap();
                    if !allowed_decisions(s.action).contains(&wrong) {
                        assert!(session.submit_decision(&s.friend_id, wrong, None, None).is_err());
                        assert_eq!(session.log().len(), before);
                    }
                }
                let kind = *s.options.choose(&mut rng).unwrap();
                let reason = (kind == DecisionKind::Ignore)
                    .then(|| *IgnoreReason::ALL.choose(&mut rng).unwrap());
                let seconds = rng.random_bool(0.8).then(|| rng.random_range(0.5..20.0));
                session.submit_decision(&s.friend_id, kind, reason, seconds).unwrap();
            }
            other => panic!("unexpected step {other:?}"),
        }
    }
    session
}

pub fn all_states() -> Vec<friend_audit_core::domain::RelationshipState> {
    let mut out = Vec::new();
    for bits in 0..8u8 {
        let s = friend_audit_core::domain::RelationshipState {
            is_friend: bits & 1 != 0,
            user_sees_friend: bits & 2 != 0,
            friend_sees_user: bits & 4 != 0,
        };
        if s.is_valid() {
            out.push(s);
        }
    }
    out
}

/// Checks the relationship-state laws along one decision sequence and
/// returns a description of the first violation.
pub fn state_violation(
    start: friend_audit_core::domain::RelationshipState,
    seq: &[DecisionKind],
) -> Option<String> {
    use DecisionKind as D;
    let mut s = start;
    for &d in seq {
        let next = s.apply(d);
        if !next.is_valid() {
            return Some(format!("{s:?} --{d}--> invalid {next:?}"));
        }
        if next.apply(d) != next {
            return Some(format!("{d} not idempotent from {s:?}"));
        }
        if s.apply(D::Sandbox) != s.apply(D::Restrict).apply(D::Unfollow)
            || s.apply(D::Sandbox) != s.apply(D::Unfollow).apply(D::Restrict)
        {
            return Some(format!("sandbox differs from unfollow+restrict at {s:?}"));
        }
        let expected_friend = match d {
            D::Unfriend => false,
            _ => s.is_friend,
        };
        if next.is_friend != expected_friend {
            return Some(format!("{d} changed friendship from {s:?}"));
        }
        if d == D::Ignore && next != s {
            return Some(format!("ignore changed {s:?}"));
        }
        if (next.user_sees_friend && !s.user_sees_friend) || (next.friend_sees_user && !s.friend_sees_user) {
            return Some(format!("{d} re-enabled a flow from {s:?}"));
        }
        s = next;
    }
    None
}

pub fn arb_decisions() -> impl Strategy<Value = Vec<DecisionKind>> {
    prop::collection::vec(prop::sample::select(DecisionKind::ALL.to_vec()), 0..24)
}
