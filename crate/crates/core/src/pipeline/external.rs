use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{merge_tasks, Run, MAIN_METHOD};
use crate::corpus::{PartyCatalog, Timeline, Tweet, MAX_TWEETS, MIN_TWEETS};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_both, EvalReport};
use crate::ideology::{user_vector, UserVector};
use crate::prediction::{predict_clustering, ClusteringConfig, Task};

/// One line of the labeled-accounts file:
/// `{"user_id": str, "party": str, "tweets": [tweet objects]}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalAccount {
    pub user_id: String,
    pub party: String,
    pub tweets: Vec<Tweet>,
}

/// Reads labeled accounts as timelines. Invalid tweets are dropped and
/// accounts left with fewer than the minimum tweet count are excluded with a
/// warning.
pub fn load_external_accounts(path: &Path, catalog: &PartyCatalog) -> Result<Vec<(Timeline, String)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let account: ExternalAccount = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if catalog.index_of(&account.party).is_none() {
            return Err(parse(format!("party {} is not in the catalog", account.party)));
        }
        if account.tweets.iter().any(|t| t.user_id != account.user_id) {
            return Err(parse(format!("tweets of {} carry another user id", account.user_id)));
        }
        let tweets: Vec<Tweet> = account.tweets.into_iter().filter(|t| t.check().is_ok()).collect();
        if tweets.len() < MIN_TWEETS {
            log::warn!(
                "external account {} has {} valid tweets, fewer than {MIN_TWEETS}; excluded",
                account.user_id,
                tweets.len()
            );
            continue;
        }
        let mut timeline = Timeline::new(account.user_id, tweets);
        timeline.truncate_recent(MAX_TWEETS);
        out.push((timeline, account.party));
    }
    Ok(out)
}

/// Runs the fitted pipeline on unseen labeled accounts. The accounts are
/// clustered together with the test users and the pivots; only the accounts
/// are scored.
pub(super) fn evaluate_external(run: &Run, path: &Path) -> Result<(EvalReport, EvalReport)> {
    let corpus = run.corpus()?;
    let split = run.split()?;
    let accounts = load_external_accounts(path, &corpus.catalog)?;
    if accounts.is_empty() {
        return Err(Error::Validation("no usable external account".into()));
    }
    let classifier = run.classifier("enriched")?;
    let users = run.vectors("enriched")?;
    let pivots = run.pivot_vectors("enriched")?;
    let mut population: Vec<UserVector> = split.test.iter().filter_map(|u| users.get(u).cloned()).collect();
    let mut truth = BTreeMap::new();
    for (timeline, party) in &accounts {
        if split.test.contains(&timeline.user_id) || truth.contains_key(&timeline.user_id) {
            return Err(Error::Validation(format!(
                "external account {} collides with another user",
                timeline.user_id
            )));
        }
        population.push(user_vector(&classifier, timeline, run.config.k)?);
        truth.insert(timeline.user_id.clone(), party.clone());
    }
    let refs: Vec<&UserVector> = population.iter().collect();
    let config = |task: Task| {
        let spec = &run.config.clustering;
        let mut c = match task {
            Task::Party => spec
                .party
                .clone()
                .unwrap_or_else(|| ClusteringConfig::party_default(corpus.catalog.len())),
            Task::Pole => spec
                .pole
                .clone()
                .unwrap_or_else(|| ClusteringConfig::pole_default(corpus.catalog.poles().len())),
        };
        c.seed = run.seed_for(&format!("predict/external/{}/{}", MAIN_METHOD.name(), task.name()));
        c
    };
    let predictions = merge_tasks(
        predict_clustering(&refs, &pivots, &corpus.catalog, &config(Task::Party), Task::Party)?,
        predict_clustering(&refs, &pivots, &corpus.catalog, &config(Task::Pole), Task::Pole)?,
    )?;
    let scored: Vec<_> = predictions.into_iter().filter(|p| truth.contains_key(&p.user_id)).collect();
    evaluate_both(&scored, &truth, &corpus.catalog)
}
