//! `focusdet`: region generation, crop ground truth, oracle detection,
//! merging and evaluation from the command line.

mod config;
mod stages;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use focusdet::io::{read_json, ClassMap, Dataset};
use focusdet::pipeline::RegionMethod;

use config::{ConfigArgs, Settings};
use stages::{CropsFile, EvalOutputs, RegionDetectionsFile, RegionsFile, SizeSource};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl From<focusdet::Error> for CliError {
    fn from(e: focusdet::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "focusdet", version, about = "Focus-and-detect region search for small objects")]
struct Cli {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    /// Gaussian-mixture clusters of the ground truth.
    Focus,
    /// Fixed 3x2 tiling.
    Even,
}

impl From<Method> for RegionMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Focus => RegionMethod::Focus,
            Method::Even => RegionMethod::Even,
        }
    }
}

#[derive(Debug, clap::Args)]
struct DataArgs {
    /// Directory of VisDrone annotation files or a dataset JSON.
    #[arg(long)]
    annotations: PathBuf,
    /// JSON map of image id to {"width", "height"}.
    #[arg(long)]
    sizes: Option<PathBuf>,
    /// Directory of images; sizes are read from their headers.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Class table JSON (default: bundled VisDrone table).
    #[arg(long)]
    classes: Option<PathBuf>,
}

impl DataArgs {
    fn class_map(&self) -> Result<ClassMap, CliError> {
        match &self.classes {
            Some(p) => Ok(ClassMap::load(p)?),
            None => Ok(ClassMap::default()),
        }
    }

    fn load(&self) -> Result<(Dataset, ClassMap), CliError> {
        let classes = self.class_map()?;
        let src = SizeSource {
            sizes: self.sizes.clone(),
            images: self.images.clone(),
        };
        Ok((stages::load_dataset(&self.annotations, &classes, &src)?, classes))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of images.
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Also write VisDrone annotation files here.
        #[arg(long)]
        visdrone_dir: Option<PathBuf>,
    },
    /// Cluster each image's boxes into focal regions.
    GenRegions {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Method::Focus)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Crop-level ground truth for every region.
    RefineGt {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulated detector output for every crop.
    OracleDetect {
        #[arg(long)]
        crops: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// No noise, misses, false positives or class flips.
        #[arg(long)]
        perfect: bool,
    },
    /// Remap region detections to image coordinates, then NMS and IBS.
    Merge {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip incomplete box suppression.
        #[arg(long)]
        no_ibs: bool,
        /// Also write VisDrone result files here.
        #[arg(long)]
        visdrone_dir: Option<PathBuf>,
    },
    /// COCO-style metrics, optionally VOC AP at a fixed IoU.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Merged detections JSON or a directory of VisDrone result files.
        #[arg(long)]
        detections: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        pr_csv: Option<PathBuf>,
        #[arg(long)]
        voc_iou: Option<f64>,
        /// Treat all classes as one for VOC AP.
        #[arg(long)]
        voc_merge_classes: bool,
    },
    /// Box-area spread before and after crop-and-resize.
    Scale {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        crops: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// synth (or given data), gen-regions, refine-gt, oracle-detect, merge, eval.
    Pipeline {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Use this data instead of a synthetic corpus.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        sizes: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Synthetic images to generate.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, value_enum, default_value_t = Method::Focus)]
        method: Method,
        #[arg(long)]
        no_ibs: bool,
        #[arg(long)]
        perfect: bool,
        #[arg(long)]
        voc_iou: Option<f64>,
        /// Also write areas.svg.
        #[arg(long)]
        svg: bool,
    },
}

fn perfect_oracle(s: &mut Settings) {
    let classes = s.file.oracle.classes;
    s.file.oracle = focusdet::scenes::OracleSpec::perfect(classes);
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut s = cli.cfg.resolve()?;
    match cli.command {
        Command::Synth {
            out,
            count,
            visdrone_dir,
        } => {
            s.announce_seed();
            stages::synth(&s, count, &out, visdrone_dir.as_deref())?;
        }
        Command::GenRegions { data, method, out } => {
            s.announce_seed();
            let (ds, _) = data.load()?;
            stages::gen_regions(&s, &ds, method.into(), &out)?;
        }
        Command::RefineGt { data, regions, out } => {
            let (ds, _) = data.load()?;
            let regions: RegionsFile = read_json(&regions)?;
            stages::refine(&s, &ds, &regions, &out)?;
        }
        Command::OracleDetect { crops, out, perfect } => {
            s.announce_seed();
            if perfect {
                perfect_oracle(&mut s);
            }
            let crops: CropsFile = read_json(&crops)?;
            stages::oracle_detect(&s, &crops, &out)?;
        }
        Command::Merge {
            detections,
            out,
            no_ibs,
            visdrone_dir,
        } => {
            if no_ibs {
                s.file.pipeline.ibs = false;
            }
            let rd: RegionDetectionsFile = read_json(&detections)?;
            stages::merge(&s, &rd, &out, visdrone_dir.as_deref())?;
        }
        Command::Eval {
            data,
            detections,
            out,
            table,
            pr_csv,
            voc_iou,
            voc_merge_classes,
        } => {
            let (ds, classes) = data.load()?;
            let outs = EvalOutputs {
                json: out,
                table,
                pr_csv,
                voc_iou,
                voc_merge_classes,
            };
            let (_, text) = stages::evaluate(&s, &ds, &detections, &classes, &outs)?;
            print!("{text}");
        }
        Command::Scale { data, crops, out, svg } => {
            let (ds, _) = data.load()?;
            let crops: CropsFile = read_json(&crops)?;
            stages::scale_report(&s, &ds, &crops, &out, svg.as_deref())?;
        }
        Command::Pipeline {
            out,
            annotations,
            sizes,
            images,
            classes,
            count,
            method,
            no_ibs,
            perfect,
            voc_iou,
            svg,
        } => {
            s.announce_seed();
            if no_ibs {
                s.file.pipeline.ibs = false;
            }
            if perfect {
                perfect_oracle(&mut s);
            }
            let p = |name: &str| out.join(name);
            let (ds, class_map) = match annotations {
                Some(a) => DataArgs {
                    annotations: a,
                    sizes,
                    images,
                    classes,
                }
                .load()?,
                None => {
                    s.file.oracle.classes = s.file.scene.classes();
                    let ds = stages::synth(&s, count, &p("annotations.json"), None)?;
                    let n = s.file.scene.classes();
                    (ds, ClassMap::numbered(n))
                }
            };
            let regions = stages::gen_regions(&s, &ds, method.into(), &p("regions.json"))?;
            let crops = stages::refine(&s, &ds, &regions, &p("crops.json"))?;
            let rd = stages::oracle_detect(&s, &crops, &p("region_detections.json"))?;
            let dets = stages::merge(&s, &rd, &p("detections.json"), None)?;
            let outs = EvalOutputs {
                json: Some(p("report.json")),
                table: Some(p("report.txt")),
                pr_csv: Some(p("pr.csv")),
                voc_iou,
                voc_merge_classes: false,
            };
            let (_, text) = stages::evaluate_set(&s, &ds, &dets.to_set(), &class_map, &outs)?;
            let svg_path = svg.then(|| p("areas.svg"));
            stages::scale_report(&s, &ds, &crops, &p("scale.json"), svg_path.as_deref())?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("focusdet: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
