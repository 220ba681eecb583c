use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::render::{read_scatter_csv, render_scatter};
use super::{CliError, Command, GraphFormat, PipelineConfig, SubsetArg};
use crate::embed::{
    aggregate_artists, read_embeddings_csv, read_feature_csv, write_embeddings_binary,
    write_embeddings_csv, ArtistProfile, EmbeddingRecord,
};
use crate::eval::{evaluate, misclassifications_csv, top_misclassifications, Prediction};
use crate::graph::{
    build_lineage, build_similarity_network, expected_linkage_report, export_graph,
    layout_timeline, read_artist_index, ExportFormat, GraphError, LinkageStatus, NetworkBuild,
};
use crate::image::{encode_pgm, heat_overlay, PpmProbe, RgbImage};
use crate::manifest::{
    class_histogram, clean, parse_manifest, split, write_manifest, DatasetManifest, ImageProbe,
    ManifestError, SplitAssignment, StyleClass, Subset,
};
use crate::nnet::{
    decode_checkpoint, encode_checkpoint, infer_config, softmax_row, train, Dataset, Network,
    NnetError, Tensor,
};
use crate::tsne::{run_tsne, TsneError};

const MANIFEST_FILE: &str = "manifest.csv";
const SPLIT_FILE: &str = "split.csv";
const EMBEDDINGS_FILE: &str = "embeddings.csv";
const PREDICT_BATCH: usize = 64;

pub(super) fn dispatch(command: Command, cfg: PipelineConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        CliError::invalid(format!("cannot create {}: {e}", cfg.out_dir.display()))
    })?;
    match command {
        Command::Ingest {
            manifest,
            images,
            probe,
            split_ratio,
        } => ingest(cfg, manifest, images, probe, split_ratio),
        Command::Train { images, epochs } => cmd_train(cfg, images, epochs),
        Command::Evaluate { images, top } => cmd_evaluate(cfg, images, top),
        Command::Embed { images, subset } => cmd_embed(cfg, images, subset),
        Command::Gradcam { image, class, layer } => cmd_gradcam(cfg, &image, class, layer),
        Command::Tsne {
            input,
            artists,
            dims,
        } => cmd_tsne(cfg, input, artists, dims),
        Command::Network { format, index } => cmd_graph(cfg, format, index, false),
        Command::Lineage { format, index } => cmd_graph(cfg, format, index, true),
        Command::Render { input, output } => cmd_render(cfg, input, output),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))
}

/// `<command>.meta` next to the outputs. Timestamps live only here so the
/// primary artifacts stay byte-identical across reruns.
fn write_meta(cfg: &PipelineConfig, command: &str, notes: &[String]) -> Result<(), CliError> {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut text = format!(
        "command = {command}\nseed = {}\nconfig_sha256 = {}\ntimestamp = {timestamp}\n",
        cfg.seed,
        cfg.sha256()
    );
    for n in notes {
        text.push_str("note = ");
        text.push_str(n);
        text.push('\n');
    }
    write(&cfg.out_dir.join(format!("{command}.meta")), text)
}

fn read_prerequisite(path: &Path, hint: &str) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|_| CliError::missing(path.display(), hint))
}

fn load_manifest(cfg: &PipelineConfig) -> Result<DatasetManifest, CliError> {
    let path = cfg.out_dir.join(MANIFEST_FILE);
    let bytes = read_prerequisite(&path, "run `artstyle ingest` first")?;
    parse_manifest(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn load_split(cfg: &PipelineConfig) -> Result<SplitAssignment, CliError> {
    let path = cfg.out_dir.join(SPLIT_FILE);
    let bytes = read_prerequisite(&path, "run `artstyle ingest` first")?;
    SplitAssignment::from_csv(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn load_network(cfg: &PipelineConfig) -> Result<Network, CliError> {
    let path = cfg.checkpoint_path();
    let bytes = read_prerequisite(&path, "run `artstyle train` first")?;
    let params = decode_checkpoint(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let hw = (cfg.network.input_height, cfg.network.input_width);
    let config = infer_config(&params, Some(hw))
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Network::new(config, params).map_err(|e| {
        CliError::invalid(format!(
            "{} does not fit a {}x{} input: {e}",
            path.display(),
            hw.0,
            hw.1
        ))
    })
}

fn load_embeddings(cfg: &PipelineConfig) -> Result<Vec<EmbeddingRecord>, CliError> {
    let path = cfg.out_dir.join(EMBEDDINGS_FILE);
    let bytes = read_prerequisite(&path, "run `artstyle embed` first")?;
    read_embeddings_csv(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

fn nnet_error(e: NnetError) -> CliError {
    match e {
        NnetError::Diverged { .. } | NnetError::NonFinite(_) | NnetError::VisualizationDiverged { .. } => {
            CliError::numeric(e.to_string())
        }
        other => CliError::invalid(other.to_string()),
    }
}

fn images_root(cfg: &PipelineConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.images_root.clone())
}

fn load_image(root: &Path, image_ref: &str, cfg: &PipelineConfig) -> Result<Tensor, CliError> {
    let path = root.join(image_ref);
    let img = RgbImage::read(&path).map_err(|e| CliError::invalid(e.to_string()))?;
    Ok(img.to_tensor(cfg.network.input_height, cfg.network.input_width))
}

fn load_dataset(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    ids: &[&str],
    root: &Path,
) -> Result<Dataset, CliError> {
    let (h, w) = (cfg.network.input_height, cfg.network.input_width);
    let mut data = Vec::with_capacity(ids.len() * h * w * 3);
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        let p = manifest
            .painting(id)
            .ok_or_else(|| CliError::invalid(format!("split lists unknown painting {id:?}")))?;
        data.extend_from_slice(load_image(root, &p.image_ref, cfg)?.data());
        labels.push(p.style.ordinal());
    }
    Ok(Dataset::new(Tensor::from_vec(vec![ids.len(), h, w, 3], data), labels))
}

fn ingest(
    mut cfg: PipelineConfig,
    manifest: Option<PathBuf>,
    images: Option<PathBuf>,
    probe: bool,
    split_ratio: Option<f64>,
) -> Result<(), CliError> {
    let path = manifest
        .or_else(|| cfg.manifest.clone())
        .ok_or_else(|| CliError::invalid("no manifest given (use --manifest or the manifest key)"))?;
    if let Some(r) = split_ratio {
        cfg.split_ratio = r;
    }
    let bytes = fs::read(&path)
        .map_err(|e| CliError::invalid(format!("cannot read manifest {}: {e}", path.display())))?;
    let parsed = parse_manifest(&bytes).map_err(|e| {
        let mut msg = format!("{}: {e}", path.display());
        if let ManifestError::Rows(rows) = &e {
            for r in rows.iter().take(20) {
                msg.push_str(&format!("\n  {r}"));
            }
        }
        CliError::invalid(msg)
    })?;
    let classes = class_histogram(&parsed).values().filter(|&&n| n > 0).count();
    println!(
        "parsed {} paintings, {} artists, {classes} classes",
        parsed.len(),
        parsed.artists.len()
    );

    let probe_impl = probe.then(|| PpmProbe::new(images_root(&cfg, images)));
    let (cleaned, report) = clean(&parsed, probe_impl.as_ref().map(|p| p as &dyn ImageProbe));
    let assignment = split(&cleaned, cfg.split_ratio, cfg.seed).map_err(|e| CliError::invalid(e.to_string()))?;

    let out = &cfg.out_dir;
    write(&out.join(MANIFEST_FILE), write_manifest(&cleaned))?;
    write(&out.join("exclusions.csv"), report.to_csv())?;
    write(&out.join(SPLIT_FILE), assignment.to_csv())?;

    println!(
        "kept {} paintings from {} artists ({} excluded)",
        cleaned.len(),
        cleaned.artists.len(),
        report.exclusions.len()
    );
    println!(
        "split: {} train / {} test",
        assignment.count(Subset::Train),
        assignment.count(Subset::Test)
    );
    for (class, n) in class_histogram(&cleaned) {
        println!("  {:<18} {n}", class.name());
    }
    write_meta(&cfg, "ingest", &[format!("manifest {}", path.display())])
}

fn subset_ids(assignment: &SplitAssignment, subset: Subset) -> Vec<&str> {
    assignment.ids(subset).collect()
}

fn cmd_train(mut cfg: PipelineConfig, images: Option<PathBuf>, epochs: Option<usize>) -> Result<(), CliError> {
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    let manifest = load_manifest(&cfg)?;
    let assignment = load_split(&cfg)?;
    let root = images_root(&cfg, images);
    let train_set = load_dataset(&cfg, &manifest, &subset_ids(&assignment, Subset::Train), &root)?;
    let val_set = load_dataset(&cfg, &manifest, &subset_ids(&assignment, Subset::Test), &root)?;
    println!("training on {} images, validating on {}", train_set.len(), val_set.len());

    let outcome = train(&train_set, &val_set, &cfg.train_config(), &cfg.network).map_err(nnet_error)?;
    for r in &outcome.history {
        println!(
            "epoch {:>3}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
            r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
        );
    }
    if let Some(best) = outcome.best_epoch {
        println!("best epoch {best}");
    }
    write(&cfg.checkpoint_path(), encode_checkpoint(&outcome.network.params))?;
    write(&cfg.out_dir.join("history.csv"), outcome.history_csv())?;
    write_meta(
        &cfg,
        "train",
        &[format!(
            "best_epoch {}",
            outcome.best_epoch.map(|b| b.to_string()).unwrap_or_else(|| "none".into())
        )],
    )
}

fn probabilities(network: &Network, images: &Tensor) -> Result<Vec<[f64; 9]>, CliError> {
    let n = images.shape()[0];
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + PREDICT_BATCH).min(n)).collect();
        let logits = network.predict(&images.select(&idx)).map_err(nnet_error)?;
        for i in 0..idx.len() {
            let p = softmax_row(logits.row(i));
            let mut row = [0.0; 9];
            row.copy_from_slice(&p);
            out.push(row);
        }
        start += PREDICT_BATCH;
    }
    Ok(out)
}

fn cmd_evaluate(cfg: PipelineConfig, images: Option<PathBuf>, top: usize) -> Result<(), CliError> {
    let network = load_network(&cfg)?;
    let manifest = load_manifest(&cfg)?;
    let assignment = load_split(&cfg)?;
    let ids = subset_ids(&assignment, Subset::Test);
    if ids.is_empty() {
        return Err(CliError::invalid("the test split is empty"));
    }
    let data = load_dataset(&cfg, &manifest, &ids, &images_root(&cfg, images))?;
    let probs = probabilities(&network, &data.images)?;
    let preds = ids
        .iter()
        .zip(&data.labels)
        .zip(&probs)
        .map(|((id, &label), p)| {
            Prediction::new(*id, StyleClass::ALL[label], *p).map_err(|e| CliError::numeric(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (accuracy, matrix) = evaluate(&preds).map_err(|e| CliError::invalid(e.to_string()))?;

    let mut prob_csv = String::from("painting_id");
    for c in StyleClass::ALL {
        prob_csv.push(',');
        prob_csv.push_str(c.name());
    }
    prob_csv.push('\n');
    for p in &preds {
        prob_csv.push_str(&p.painting_id);
        for v in p.probabilities {
            prob_csv.push_str(&format!(",{v}"));
        }
        prob_csv.push('\n');
    }
    let out = &cfg.out_dir;
    write(&out.join("probabilities.csv"), prob_csv)?;
    write(&out.join("confusion.csv"), matrix.to_csv())?;
    write(
        &out.join("misclassified.csv"),
        misclassifications_csv(&top_misclassifications(&preds, top)),
    )?;
    println!("accuracy {accuracy:.4} on {} test paintings", preds.len());
    write_meta(&cfg, "evaluate", &[format!("accuracy {accuracy}")])
}

fn cmd_embed(cfg: PipelineConfig, images: Option<PathBuf>, subset: SubsetArg) -> Result<(), CliError> {
    let network = load_network(&cfg)?;
    let manifest = load_manifest(&cfg)?;
    let ids: Vec<String> = match subset {
        SubsetArg::All => manifest.paintings.iter().map(|p| p.painting_id.clone()).collect(),
        SubsetArg::Train | SubsetArg::Test => {
            let s = if subset == SubsetArg::Train { Subset::Train } else { Subset::Test };
            load_split(&cfg)?.ids(s).map(str::to_string).collect()
        }
    };
    let root = images_root(&cfg, images);
    let mut records = Vec::with_capacity(ids.len());
    for id in &ids {
        let p = manifest
            .painting(id)
            .ok_or_else(|| CliError::invalid(format!("split lists unknown painting {id:?}")))?;
        let image = load_image(&root, &p.image_ref, &cfg)?;
        let features = network.extract_features(&image).map_err(nnet_error)?;
        records.push(EmbeddingRecord::new(id.clone(), features).map_err(|e| CliError::numeric(e.to_string()))?);
    }
    let out = &cfg.out_dir;
    write(&out.join(EMBEDDINGS_FILE), write_embeddings_csv(&records))?;
    write(&out.join("embeddings.aemb"), write_embeddings_binary(&records))?;
    println!("embedded {} paintings", records.len());
    write_meta(&cfg, "embed", &[])
}

fn parse_class(s: &str) -> Result<usize, CliError> {
    if let Ok(i) = s.parse::<usize>() {
        return StyleClass::from_ordinal(i)
            .map(|c| c.ordinal())
            .ok_or_else(|| CliError::invalid(format!("class index {i} outside 0..9")));
    }
    s.parse::<StyleClass>()
        .map(|c| c.ordinal())
        .map_err(|e| CliError::invalid(e.to_string()))
}

fn cmd_gradcam(
    cfg: PipelineConfig,
    image_path: &Path,
    class: Option<String>,
    layer: Option<String>,
) -> Result<(), CliError> {
    let network = load_network(&cfg)?;
    let img = RgbImage::read(image_path).map_err(|e| CliError::invalid(e.to_string()))?;
    let (h, w) = (cfg.network.input_height, cfg.network.input_width);
    let tensor = img.to_tensor(h, w);
    let class_index = match class {
        Some(c) => parse_class(&c)?,
        None => {
            let batch = Tensor::from_vec(vec![1, h, w, 3], tensor.data().to_vec());
            let probs = probabilities(&network, &batch)?;
            Prediction::new("input", StyleClass::ALL[0], probs[0])
                .map_err(|e| CliError::numeric(e.to_string()))?
                .predicted()
                .ordinal()
        }
    };
    let map = network
        .grad_cam(&tensor, class_index, layer.as_deref(), true)
        .map_err(nnet_error)?;
    let heat = crate::nnet::GradCamMap::normalized(&map.values);
    let resized = RgbImage::from_tensor(&tensor);
    let out = &cfg.out_dir;
    write(&out.join("gradcam.pgm"), encode_pgm(map.width, map.height, &heat))?;
    write(&out.join("gradcam_overlay.ppm"), heat_overlay(&resized, &heat, 0.5).encode_ppm())?;
    println!(
        "grad-cam for {} at {}",
        StyleClass::ALL[class_index].name(),
        map.layer_id
    );
    write_meta(
        &cfg,
        "gradcam",
        &[format!("class {}", StyleClass::ALL[class_index].name()), format!("layer {}", map.layer_id)],
    )
}

fn tsne_error(e: TsneError) -> CliError {
    match e {
        TsneError::NonFiniteKl(_) => CliError::numeric(e.to_string()),
        other => CliError::invalid(other.to_string()),
    }
}

fn cmd_tsne(
    mut cfg: PipelineConfig,
    input: Option<PathBuf>,
    artists: bool,
    dims: Option<usize>,
) -> Result<(), CliError> {
    if let Some(d) = dims {
        cfg.tsne.out_dims = d;
    }
    let path = input.unwrap_or_else(|| cfg.out_dir.join(EMBEDDINGS_FILE));
    let bytes = read_prerequisite(&path, "run `artstyle embed` first or pass --input")?;
    let rows = read_feature_csv(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let manifest = fs::read(cfg.out_dir.join(MANIFEST_FILE))
        .ok()
        .and_then(|b| parse_manifest(&b).ok());

    let (ids, points, styles, id_header, stem) = if artists {
        let manifest = manifest.ok_or_else(|| {
            CliError::missing(cfg.out_dir.join(MANIFEST_FILE).display(), "artist profiles need the manifest")
        })?;
        let records = rows
            .into_iter()
            .map(|(id, v)| EmbeddingRecord::new(id, v))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::invalid(e.to_string()))?;
        let profiles = aggregate_artists(&records, &manifest).map_err(|e| CliError::invalid(e.to_string()))?;
        (
            profiles.iter().map(|p| p.artist_id.clone()).collect::<Vec<_>>(),
            profiles.iter().map(|p| p.mean_vector.clone()).collect::<Vec<_>>(),
            profiles.iter().map(|p| p.style).collect::<Vec<_>>(),
            "artist_id",
            "tsne_artists",
        )
    } else {
        let styles = match &manifest {
            Some(m) => rows
                .iter()
                .map(|(id, _)| m.painting(id).map(|p| p.style))
                .collect::<Option<Vec<_>>>()
                .unwrap_or_default(),
            None => Vec::new(),
        };
        let (ids, points): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        (ids, points, styles, "painting_id", "tsne")
    };

    let emb = run_tsne(&points, &cfg.tsne_config()).map_err(tsne_error)?;
    let out = &cfg.out_dir;
    write(&out.join(format!("{stem}.csv")), emb.to_csv(id_header, &ids, &styles))?;
    write(&out.join(format!("{stem}_kl.csv")), emb.kl_csv())?;
    println!(
        "embedded {} points in {}D, final KL {:.6}",
        emb.n,
        emb.dims,
        emb.final_kl()
    );
    let mut notes = vec![format!("input {}", path.display())];
    if emb.jittered {
        notes.push(format!("duplicate inputs jittered by {:e} of the data range", crate::tsne::JITTER_SCALE));
        eprintln!("warning: duplicate input points were jittered");
    }
    if !emb.unconverged_rows.is_empty() {
        notes.push(format!("perplexity search did not converge for rows {:?}", emb.unconverged_rows));
    }
    write_meta(&cfg, stem, &notes)
}

fn graph_error(e: GraphError) -> CliError {
    CliError::invalid(e.to_string())
}

fn node_labels(manifest: &DatasetManifest, index: Option<PathBuf>) -> Result<BTreeMap<String, String>, CliError> {
    let Some(path) = index else {
        return Ok(BTreeMap::new());
    };
    let bytes = fs::read(&path).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", path.display())))?;
    let by_name = read_artist_index(&bytes).map_err(graph_error)?;
    Ok(manifest
        .artists
        .values()
        .filter_map(|a| by_name.get(&a.name).map(|i| (a.artist_id.clone(), i.clone())))
        .collect())
}

fn report_build(build: &NetworkBuild, notes: &mut Vec<String>) {
    for t in &build.ties {
        let msg = format!(
            "tie for {}: {:?} share similarity {}, chose {}",
            t.artist, t.tied, t.similarity, t.chosen
        );
        eprintln!("warning: {msg}");
        notes.push(msg);
    }
    for (a, b) in &build.equal_year_edges {
        let msg = format!("{a} and {b} share a mean year; edge oriented by id");
        eprintln!("warning: {msg}");
        notes.push(msg);
    }
}

fn cmd_graph(cfg: PipelineConfig, format: GraphFormat, index: Option<PathBuf>, lineage: bool) -> Result<(), CliError> {
    let manifest = load_manifest(&cfg)?;
    let embeddings = load_embeddings(&cfg)?;
    let mut profiles: Vec<ArtistProfile> =
        aggregate_artists(&embeddings, &manifest).map_err(|e| CliError::invalid(e.to_string()))?;
    let mut notes = Vec::new();
    let name = if lineage { "lineage" } else { "network" };

    if lineage {
        let (dated, undated): (Vec<_>, Vec<_>) = profiles.into_iter().partition(|p| p.mean_year.is_some());
        for p in &undated {
            let msg = format!("excluded {} (no dated paintings)", p.artist_id);
            eprintln!("warning: {msg}");
            notes.push(msg);
        }
        profiles = dated;
    }
    let build = if lineage {
        build_lineage(&profiles)
    } else {
        build_similarity_network(&profiles)
    }
    .map_err(graph_error)?;
    report_build(&build, &mut notes);

    let labels = node_labels(&manifest, index)?;
    let (fmt, ext) = match format {
        GraphFormat::Dot => (ExportFormat::Dot, "dot"),
        GraphFormat::Json => (ExportFormat::Json, "json"),
    };
    let out = &cfg.out_dir;
    write(&out.join(format!("{name}.{ext}")), export_graph(&build.graph, fmt, &labels))?;
    if lineage {
        let mut csv = String::from("artist_id,x,y\n");
        for (id, (x, y)) in layout_timeline(&build.graph) {
            csv.push_str(&format!("{id},{x},{y}\n"));
        }
        write(&out.join("timeline.csv"), csv)?;
    }
    println!(
        "{name}: {} artists, {} edges",
        build.graph.nodes.len(),
        build.graph.edges.len()
    );

    let names: BTreeMap<String, String> = manifest
        .artists
        .values()
        .map(|a| (a.artist_id.clone(), a.name.clone()))
        .collect();
    for (a, b, status) in expected_linkage_report(&build.graph, &names) {
        if status != LinkageStatus::Absent {
            let msg = format!("expected linkage {a} / {b}: {status:?}");
            println!("{msg}");
            notes.push(msg);
        }
    }
    write_meta(&cfg, name, &notes)
}

fn cmd_render(cfg: PipelineConfig, input: Option<PathBuf>, output: Option<PathBuf>) -> Result<(), CliError> {
    let path = input.unwrap_or_else(|| cfg.out_dir.join("tsne.csv"));
    let bytes = read_prerequisite(&path, "run `artstyle tsne` first or pass --input")?;
    let (dims, points) = read_scatter_csv(&bytes).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let title = format!("{dims}D T-SNE, {} points", points.len());
    let svg = render_scatter(&points, &title);
    let output = output.unwrap_or_else(|| cfg.out_dir.join("scatter.svg"));
    write(&output, svg)?;
    println!("wrote {}", output.display());
    write_meta(&cfg, "render", &[format!("input {}", path.display())])
}
