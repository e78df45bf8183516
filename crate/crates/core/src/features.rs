//! Social-graph snapshots and the seven mutual-activity features computed
//! for a (user, friend) pair.
//!
//! Snapshots are line-delimited JSON, one record per line, tagged by `kind`:
//!
//! ```text
//! {"kind":"user","id":"u1","current_city":"Miami","hometown":null,"schools":[],"employers":[],"friend_ids":["u2"]}
//! {"kind":"post","post_id":"p1","author_id":"u1","commenter_ids":["u2"]}
//! {"kind":"photo","photo_id":"ph1","tagged_ids":["u1","u2"]}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type UserId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    #[serde(default)]
    pub current_city: Option<String>,
    #[serde(default)]
    pub hometown: Option<String>,
    #[serde(default)]
    pub schools: BTreeSet<String>,
    #[serde(default)]
    pub employers: BTreeSet<String>,
    #[serde(default)]
    pub friend_ids: BTreeSet<UserId>,
}

impl UserProfile {
    pub fn new(id: impl Into<UserId>) -> Self {
        UserProfile {
            id: id.into(),
            current_city: None,
            hometown: None,
            schools: BTreeSet::new(),
            employers: BTreeSet::new(),
            friend_ids: BTreeSet::new(),
        }
    }
}

/// A story and the users who commented on it. Self-comments are allowed
/// but never count as mutual activity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub author_id: UserId,
    #[serde(default)]
    pub commenter_ids: BTreeSet<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub photo_id: String,
    pub tagged_ids: BTreeSet<UserId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    User(UserProfile),
    Post(PostRecord),
    Photo(PhotoRecord),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("unknown user id {0:?}")]
    UnknownId(UserId),
    #[error("{0:?} and {1:?} are not friends")]
    NotFriends(UserId, UserId),
}

/// Immutable social-graph snapshot with lookup indices.
///
/// Ids are unique, every referenced id exists and friendship is symmetric;
/// construction fails otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialSnapshot {
    users: BTreeMap<UserId, UserProfile>,
    posts: Vec<PostRecord>,
    photos: Vec<PhotoRecord>,
    posts_by_author: HashMap<UserId, Vec<usize>>,
    photos_by_user: HashMap<UserId, Vec<usize>>,
}

impl SocialSnapshot {
    pub fn new(
        users: Vec<UserProfile>,
        posts: Vec<PostRecord>,
        photos: Vec<PhotoRecord>,
    ) -> Result<Self, SnapshotError> {
        let integrity = |m: String| Err(SnapshotError::Integrity(m));
        let mut by_id = BTreeMap::new();
        for user in users {
            if user.friend_ids.contains(&user.id) {
                return integrity(format!("user {:?} lists itself as a friend", user.id));
            }
            let id = user.id.clone();
            if by_id.insert(id.clone(), user).is_some() {
                return integrity(format!("duplicate user id {id:?}"));
            }
        }
        for user in by_id.values() {
            for friend in &user.friend_ids {
                match by_id.get(friend) {
                    None => {
                        return integrity(format!(
                            "user {:?} lists unknown friend {friend:?}",
                            user.id
                        ))
                    }
                    Some(other) if !other.friend_ids.contains(&user.id) => {
                        return integrity(format!(
                            "asymmetric friendship: {:?} lists {friend:?} but not the reverse",
                            user.id
                        ))
                    }
                    Some(_) => {}
                }
            }
        }

        let mut seen = HashSet::new();
        let mut posts_by_author: HashMap<UserId, Vec<usize>> = HashMap::new();
        for (i, post) in posts.iter().enumerate() {
            if !seen.insert(post.post_id.as_str()) {
                return integrity(format!("duplicate post id {:?}", post.post_id));
            }
            for id in std::iter::once(&post.author_id).chain(&post.commenter_ids) {
                if !by_id.contains_key(id) {
                    return integrity(format!(
                        "post {:?} references unknown user {id:?}",
                        post.post_id
                    ));
                }
            }
            posts_by_author
                .entry(post.author_id.clone())
                .or_default()
                .push(i);
        }

        let mut seen = HashSet::new();
        let mut photos_by_user: HashMap<UserId, Vec<usize>> = HashMap::new();
        for (i, photo) in photos.iter().enumerate() {
            if !seen.insert(photo.photo_id.as_str()) {
                return integrity(format!("duplicate photo id {:?}", photo.photo_id));
            }
            if photo.tagged_ids.is_empty() {
                return integrity(format!("photo {:?} tags nobody", photo.photo_id));
            }
            for id in &photo.tagged_ids {
                if !by_id.contains_key(id) {
                    return integrity(format!(
                        "photo {:?} references unknown user {id:?}",
                        photo.photo_id
                    ));
                }
                photos_by_user.entry(id.clone()).or_default().push(i);
            }
        }

        Ok(SocialSnapshot {
            users: by_id,
            posts,
            photos,
            posts_by_author,
            photos_by_user,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new(), Vec::new()).expect("empty snapshot is valid")
    }

    pub fn users(&self) -> impl Iterator<Item = &UserProfile> {
        self.users.values()
    }

    pub fn user(&self, id: &str) -> Option<&UserProfile> {
        self.users.get(id)
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn posts(&self) -> &[PostRecord] {
        &self.posts
    }

    pub fn photos(&self) -> &[PhotoRecord] {
        &self.photos
    }

    pub fn are_friends(&self, a: &str, b: &str) -> bool {
        self.users
            .get(a)
            .is_some_and(|u| u.friend_ids.contains(b))
    }

    /// Writes the snapshot in its line-delimited form: users in id order,
    /// then posts and photos in stored order.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for user in self.users.values() {
            serde_json::to_writer(&mut out, &Record::User(user.clone()))?;
            out.write_all(b"\n")?;
        }
        for post in &self.posts {
            serde_json::to_writer(&mut out, &Record::Post(post.clone()))?;
            out.write_all(b"\n")?;
        }
        for photo in &self.photos {
            serde_json::to_writer(&mut out, &Record::Photo(photo.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

/// Reads a line-delimited snapshot. Blank lines are skipped. Friendship is
/// checked, never repaired.
pub fn load_snapshot<R: BufRead>(reader: R) -> Result<SocialSnapshot, SnapshotError> {
    let mut users = Vec::new();
    let mut posts = Vec::new();
    let mut photos = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| SnapshotError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        match record {
            Record::User(u) => users.push(u),
            Record::Post(p) => posts.push(p),
            Record::Photo(p) => photos.push(p),
        }
    }
    SocialSnapshot::new(users, posts, photos)
}

pub const FEATURE_COUNT: usize = 7;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mutual_post_count",
    "common_photo_count",
    "mutual_friend_count",
    "same_current_city",
    "same_hometown",
    "common_study_count",
    "common_work_count",
];

/// Mutual-activity features of a friend pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mutual_post_count: u32,
    pub common_photo_count: u32,
    pub mutual_friend_count: u32,
    pub same_current_city: bool,
    pub same_hometown: bool,
    pub common_study_count: u32,
    pub common_work_count: u32,
}

impl FeatureVector {
    /// Numeric view used by the learners; booleans map to 0/1.
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            f64::from(self.mutual_post_count),
            f64::from(self.common_photo_count),
            f64::from(self.mutual_friend_count),
            f64::from(u8::from(self.same_current_city)),
            f64::from(u8::from(self.same_hometown)),
            f64::from(self.common_study_count),
            f64::from(self.common_work_count),
        ]
    }
}

fn same_place(a: Option<&String>, b: Option<&String>) -> bool {
    let norm = |s: &String| s.trim().to_lowercase();
    match (a.map(norm), b.map(norm)) {
        (Some(a), Some(b)) => !a.is_empty() && a == b,
        _ => false,
    }
}

/// Computes the seven features. Symmetric in `user` and `friend`.
pub fn compute_features(
    snapshot: &SocialSnapshot,
    user: &str,
    friend: &str,
) -> Result<FeatureVector, FeatureError> {
    let u = snapshot
        .user(user)
        .ok_or_else(|| FeatureError::UnknownId(user.to_string()))?;
    let f = snapshot
        .user(friend)
        .ok_or_else(|| FeatureError::UnknownId(friend.to_string()))?;
    if !u.friend_ids.contains(friend) {
        return Err(FeatureError::NotFriends(user.to_string(), friend.to_string()));
    }

    let commented_by = |author: &str, commenter: &str| -> usize {
        snapshot
            .posts_by_author
            .get(author)
            .map_or(0, |idx| {
                idx.iter()
                    .filter(|&&i| snapshot.posts[i].commenter_ids.contains(commenter))
                    .count()
            })
    };
    let mutual_posts = commented_by(user, friend) + commented_by(friend, user);

    let common_photos = snapshot.photos_by_user.get(user).map_or(0, |idx| {
        idx.iter()
            .filter(|&&i| snapshot.photos[i].tagged_ids.contains(friend))
            .count()
    });

    // friend lists never contain their owner, and u/f are each other's
    // friends, so the intersection already excludes the pair
    let mutual_friends = u.friend_ids.intersection(&f.friend_ids).count();

    Ok(FeatureVector {
        mutual_post_count: mutual_posts as u32,
        common_photo_count: common_photos as u32,
        mutual_friend_count: mutual_friends as u32,
        same_current_city: same_place(u.current_city.as_ref(), f.current_city.as_ref()),
        same_hometown: same_place(u.hometown.as_ref(), f.hometown.as_ref()),
        common_study_count: u.schools.intersection(&f.schools).count() as u32,
        common_work_count: u.employers.intersection(&f.employers).count() as u32,
    })
}
