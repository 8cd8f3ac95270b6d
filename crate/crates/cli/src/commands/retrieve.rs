use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use dermclass_core::retrieval::{
    extract_features, l2_normalize, match_flag, retrieval_report_tsv, RetrievalRow,
};
use dermclass_core::{FeatureIndex, ImageRecord, Tensor};

use super::{load_checkpoint, load_dataset_manifest, load_groups, require, tag_set, Context};
use crate::config::{layered, Layered};
use crate::error::{CliError, CliResult};

pub const DEFAULT_K: usize = 5;

/// Index penultimate-layer features and retrieve nearest neighbours.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RetrieveArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `id<TAB>group` file; without it every record is both indexed and queried.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Groups placed in the index.
    #[arg(long, value_delimiter = ',')]
    pub index_group: Option<Vec<String>>,
    /// Groups used as queries.
    #[arg(long, value_delimiter = ',')]
    pub query_group: Option<Vec<String>>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Scale feature vectors to unit length before indexing.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

layered!(RetrieveArgs {
    model,
    dataset,
    split,
    index_group,
    query_group,
    k,
    normalize,
    seed
});

fn features(
    net: &dermclass_core::Network,
    records: &[&ImageRecord],
    normalize: bool,
) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(64) {
        let images: Vec<&Tensor> = chunk.iter().map(|r| &r.image).collect();
        let batch = Tensor::stack(&images)
            .map_err(|e| CliError::data(format!("images differ in shape: {e}")))?;
        out.extend(extract_features(net, &batch)?);
    }
    if normalize {
        out.iter_mut().for_each(|v| l2_normalize(v));
    }
    Ok(out)
}

pub fn run(ctx: &Context, mut args: RetrieveArgs, file: RetrieveArgs) -> CliResult<()> {
    args.fill_from(file);
    let seed = *args.seed.get_or_insert(0);
    let k = *args.k.get_or_insert(DEFAULT_K);
    let normalize = *args.normalize.get_or_insert(false);
    let model = require(&args.model, "model")?.clone();
    let path = require(&args.dataset, "dataset")?.clone();

    let mut run = ctx.start("retrieve", seed, &args)?;
    let ckpt = load_checkpoint(&mut run, &model)?;
    let manifest = load_dataset_manifest(&mut run, &path)?;
    let (index_recs, query_recs): (Vec<&ImageRecord>, Vec<&ImageRecord>) = match &args.split {
        None => {
            if args.index_group.is_some() || args.query_group.is_some() {
                return Err(CliError::bad_argument(
                    "--index-group/--query-group need --split",
                ));
            }
            (
                manifest.records.iter().collect(),
                manifest.records.iter().collect(),
            )
        }
        Some(split) => {
            let groups: BTreeMap<String, String> = load_groups(&mut run, split)?;
            let pick = |wanted: &[String]| -> CliResult<Vec<&ImageRecord>> {
                let mut out = Vec::new();
                for r in &manifest.records {
                    let g = groups.get(&r.id).ok_or_else(|| {
                        CliError::data(format!(
                            "record `{}` is missing from {}",
                            r.id,
                            split.display()
                        ))
                    })?;
                    if wanted.contains(g) {
                        out.push(r);
                    }
                }
                Ok(out)
            };
            (
                pick(require(&args.index_group, "index-group")?)?,
                pick(require(&args.query_group, "query-group")?)?,
            )
        }
    };
    if index_recs.is_empty() || query_recs.is_empty() {
        return Err(CliError::data("index and query sets must both be nonempty"));
    }
    if k == 0 || k > index_recs.len() {
        return Err(CliError::bad_argument(format!(
            "k = {k} outside [1, {}]",
            index_recs.len()
        )));
    }

    let index = FeatureIndex::new(
        index_recs.iter().map(|r| r.id.clone()).collect(),
        features(&ckpt.network, &index_recs, normalize)?,
    )?;
    let tags: BTreeMap<&str, _> = index_recs
        .iter()
        .map(|r| (r.id.as_str(), tag_set(r)))
        .collect();
    let mut rows = Vec::new();
    let mut matched_queries = 0;
    let mut matched_neighbors = 0;
    for (q, f) in query_recs
        .iter()
        .zip(features(&ckpt.network, &query_recs, normalize)?)
    {
        let query_tags = tag_set(q);
        let mut any = false;
        for (rank, n) in index.knn(&f, k)?.into_iter().enumerate() {
            let matched = match_flag(&query_tags, &tags[n.id.as_str()]);
            any |= matched;
            matched_neighbors += usize::from(matched);
            rows.push(RetrievalRow {
                query: q.id.clone(),
                rank: rank + 1,
                neighbor: n,
                matched,
            });
        }
        matched_queries += usize::from(any);
    }
    let mut summary = String::new();
    let _ = writeln!(summary, "indexed = {}", index.len());
    let _ = writeln!(summary, "queries = {}", query_recs.len());
    let _ = writeln!(summary, "k = {k}");
    let _ = writeln!(summary, "dimension = {}", index.dim());
    let _ = writeln!(summary, "normalized = {normalize}");
    let _ = writeln!(
        summary,
        "neighbor_match_rate = {:.6}",
        matched_neighbors as f64 / (k * query_recs.len()) as f64
    );
    let _ = writeln!(
        summary,
        "query_hit_rate = {:.6}",
        matched_queries as f64 / query_recs.len() as f64
    );
    run.write("features.idx", index.to_bytes())?;
    run.write("retrieval.tsv", retrieval_report_tsv(&rows))?;
    run.write("retrieval_summary.txt", summary)?;
    run.finish()?;
    Ok(())
}
