//! Seeded synthetic benchmark: 4 classes, 20 training streams, 5 test
//! streams, trained classifier and per-ws binary detectors.

use spd_motion::io::{gen_synthetic, AnnotationFile, SyntheticSpec};
use spd_motion::metrics::{evaluate_streams, MetricOptions, MetricsReport, StreamResult};
use spd_motion::model::{train_classifier, ClassifierOptions, Preprocess, RecognitionModel};
use spd_motion::network::{NetworkConfig, TrainConfig};
use spd_motion::online::{train_detector, DetectorEvent, DetectorMode, DetectorModel, DetectorOptions, Engine, OnlineConfig};
use spd_motion::skeleton::{default_partition, PartitionScheme, SkeletonSequence};
use spd_motion::Result;

pub const SEED: u64 = 7;

pub struct Bench {
    pub spec: SyntheticSpec,
    pub train: Vec<(SkeletonSequence, AnnotationFile)>,
    pub test: Vec<(SkeletonSequence, AnnotationFile)>,
    pub scheme: PartitionScheme,
    pub classifier: RecognitionModel,
    pub detectors: Vec<DetectorModel>,
}

pub fn classifier_options() -> ClassifierOptions {
    ClassifierOptions {
        preprocess: Preprocess { frames: 24, derivative: false },
        network: NetworkConfig { feature_dim: 16, spdc_dim: 8, ..NetworkConfig::default() },
        train: TrainConfig { epochs: 5, seed: 1, ..TrainConfig::default() },
        pairs: 400,
        positive_ratio: 0.5,
    }
}

pub fn detector_options(ws: usize) -> DetectorOptions {
    DetectorOptions {
        ws,
        mode: DetectorMode::Binary,
        windows_per_sequence: 30,
        classifier: ClassifierOptions { preprocess: Preprocess { frames: 16, derivative: false }, ..classifier_options() },
    }
}

pub fn streams(spec: &SyntheticSpec, indices: std::ops::Range<u64>) -> Vec<(SkeletonSequence, AnnotationFile)> {
    indices.map(|i| gen_synthetic(spec, i).unwrap()).collect()
}

impl Bench {
    /// Generates the data, trains the classifier on annotated segments and one
    /// detector per entry of `window_sizes`.
    pub fn build(window_sizes: &[usize]) -> Result<Bench> {
        let spec = SyntheticSpec { seed: SEED, ..SyntheticSpec::default() };
        let train = streams(&spec, 0..20);
        let test = streams(&spec, 100..105);
        let scheme = default_partition(train[0].0.layout())?;

        let mut segs = Vec::new();
        let mut labels = Vec::new();
        for (s, a) in &train {
            for (seg, c) in a.extract_segments(s)? {
                segs.push(seg);
                labels.push(c);
            }
        }
        let (classifier, _) = train_classifier(&segs, &labels, spec.class_names(), scheme.clone(), &classifier_options())?;

        let seqs: Vec<_> = train.iter().map(|t| t.0.clone()).collect();
        let frame_labels = train.iter().map(|t| t.1.frame_labels()).collect::<Result<Vec<_>>>()?;
        let mut detectors = Vec::new();
        for &ws in window_sizes {
            let (d, _) = train_detector(&seqs, &frame_labels, &spec.class_names(), scheme.clone(), &detector_options(ws))?;
            detectors.push(d);
        }
        Ok(Bench { spec, train, test, scheme, classifier, detectors })
    }

    pub fn detector(&self, ws: usize) -> &DetectorModel {
        self.detectors.iter().find(|d| d.ws == ws).expect("detector trained for this ws")
    }

    pub fn run(&self, cfg: OnlineConfig, stream: &SkeletonSequence) -> Result<Vec<DetectorEvent>> {
        Engine::new(cfg, stream.layout().clone(), self.detector(cfg.ws), &self.classifier)?.run(stream.frames().iter().cloned())
    }

    /// Pooled metrics over the test streams.
    pub fn evaluate(&self, cfg: OnlineConfig) -> Result<MetricsReport> {
        let mut results = Vec::new();
        for (s, a) in &self.test {
            let events = self.run(cfg, s)?;
            results.push(StreamResult::from_events(&events, a.ground_truth()?));
        }
        evaluate_streams(&results, &MetricOptions::default(), |l| l.min(1))
    }
}
