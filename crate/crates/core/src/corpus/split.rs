//! Leave-one-out evaluation split.

use serde::{Deserialize, Serialize};

use super::Dataset;

/// Per-user split boundaries.
///
/// For sequences of length >= 3 the last item is the test target, the
/// penultimate one the validation target, and everything before it is
/// training data. Shorter sequences are training-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSplit {
    pub user_id: String,
    pub items: Vec<String>,
    pub train_end: usize,
}

impl UserSplit {
    pub fn has_holdout(&self) -> bool {
        self.train_end + 2 == self.items.len()
    }

    pub fn train_items(&self) -> &[String] {
        &self.items[..self.train_end]
    }

    /// `(context, target)` for validation, if the user has held-out items.
    pub fn validation(&self) -> Option<(&[String], &str)> {
        self.has_holdout().then(|| {
            (
                &self.items[..self.train_end],
                self.items[self.train_end].as_str(),
            )
        })
    }

    /// `(context, target)` for test; the context includes the validation item.
    pub fn test(&self) -> Option<(&[String], &str)> {
        let last = self.items.len() - 1;
        self.has_holdout()
            .then(|| (&self.items[..last], self.items[last].as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub users: Vec<UserSplit>,
}

impl SplitDataset {
    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn get(&self, user_id: &str) -> Option<&UserSplit> {
        self.users
            .binary_search_by(|u| u.user_id.as_str().cmp(user_id))
            .ok()
            .map(|idx| &self.users[idx])
    }

    pub fn test_users(&self) -> impl Iterator<Item = &UserSplit> {
        self.users.iter().filter(|u| u.has_holdout())
    }
}

pub fn split_leave_one_out(dataset: &Dataset) -> SplitDataset {
    let users = dataset
        .users
        .iter()
        .filter(|(_, seq)| !seq.is_empty())
        .map(|(user_id, seq)| {
            let items: Vec<String> = seq.iter().map(|i| i.item_id.clone()).collect();
            let train_end = if items.len() >= 3 {
                items.len() - 2
            } else {
                items.len()
            };
            UserSplit {
                user_id: user_id.clone(),
                items,
                train_end,
            }
        })
        .collect();
    SplitDataset { users }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Interaction, ItemRecord};

    fn dataset(seqs: &[(&str, &[&str])]) -> Dataset {
        let mut ds = Dataset::default();
        for (user, items) in seqs {
            let seq = items
                .iter()
                .enumerate()
                .map(|(t, item)| {
                    ds.items
                        .insert(item.to_string(), ItemRecord::new(*item, *item));
                    Interaction {
                        user_id: user.to_string(),
                        item_id: item.to_string(),
                        rating: 5.0,
                        timestamp: t as i64,
                        summary: String::new(),
                        review_text: String::new(),
                    }
                })
                .collect();
            ds.users.insert(user.to_string(), seq);
        }
        ds
    }

    #[test]
    fn four_item_user() {
        let split = split_leave_one_out(&dataset(&[("u", &["a", "b", "c", "d"])]));
        let u = split.get("u").unwrap();
        assert_eq!(u.train_items(), ["a", "b"]);
        let (ctx, target) = u.validation().unwrap();
        assert_eq!(
            (ctx, target),
            (&["a".to_string(), "b".to_string()][..], "c")
        );
        let (ctx, target) = u.test().unwrap();
        assert_eq!(ctx.len(), 3);
        assert_eq!(target, "d");
    }

    #[test]
    fn short_user_is_train_only() {
        let split = split_leave_one_out(&dataset(&[("u", &["a", "b"])]));
        let u = split.get("u").unwrap();
        assert_eq!(u.train_items(), ["a", "b"]);
        assert!(u.validation().is_none() && u.test().is_none());
        assert_eq!(split.test_users().count(), 0);
    }
}
