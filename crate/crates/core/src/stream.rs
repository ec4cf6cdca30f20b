//! Synthetic MPEG-like video streams: GoP templates, frame classes and the
//! k-frames labeling that marks each frame mandatory, hard optional or optional.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StreamError {
    #[error("a GoP needs at least one P frame (nb_p = 0)")]
    NoPFrames,
    #[error("a stream needs at least one GoP")]
    NoGop,
    #[error("required rate must be positive and finite")]
    BadRate,
    #[error("invalid frame class character {0:?}")]
    BadClass(char),
    #[error("invalid pattern label character {0:?}")]
    BadLabel(char),
    #[error("GoP template must start with its single I frame")]
    BadTemplate,
}

/// MPEG frame type. Criticality is `I > P > B`, which the derived `Ord`
/// reflects (`B < P < I`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrameClass {
    B,
    P,
    I,
}

impl FrameClass {
    pub const ALL: [FrameClass; 3] = [FrameClass::I, FrameClass::P, FrameClass::B];

    pub fn as_char(self) -> char {
        match self {
            FrameClass::I => 'I',
            FrameClass::P => 'P',
            FrameClass::B => 'B',
        }
    }

    pub fn label(self) -> PatternLabel {
        match self {
            FrameClass::I => PatternLabel::M,
            FrameClass::P => PatternLabel::H,
            FrameClass::B => PatternLabel::O,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            FrameClass::I => 0,
            FrameClass::P => 1,
            FrameClass::B => 2,
        }
    }
}

impl TryFrom<char> for FrameClass {
    type Error = StreamError;

    fn try_from(c: char) -> Result<Self, Self::Error> {
        match c {
            'I' => Ok(FrameClass::I),
            'P' => Ok(FrameClass::P),
            'B' => Ok(FrameClass::B),
            other => Err(StreamError::BadClass(other)),
        }
    }
}

/// k-frames alphabet: Mandatory, Hard optional, Optional. Ordered by
/// scheduling priority (`O < H < M`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PatternLabel {
    O,
    H,
    M,
}

impl PatternLabel {
    pub fn as_char(self) -> char {
        match self {
            PatternLabel::M => 'M',
            PatternLabel::H => 'H',
            PatternLabel::O => 'O',
        }
    }

    pub fn class(self) -> FrameClass {
        match self {
            PatternLabel::M => FrameClass::I,
            PatternLabel::H => FrameClass::P,
            PatternLabel::O => FrameClass::B,
        }
    }
}

impl TryFrom<char> for PatternLabel {
    type Error = StreamError;

    fn try_from(c: char) -> Result<Self, Self::Error> {
        match c {
            'M' => Ok(PatternLabel::M),
            'H' => Ok(PatternLabel::H),
            'O' => Ok(PatternLabel::O),
            other => Err(StreamError::BadLabel(other)),
        }
    }
}

/// Cyclic GoP layout: one leading I frame followed by interleaved B groups and P frames.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GopTemplate {
    nb_p: usize,
    b_per_group: usize,
    frames: Vec<FrameClass>,
}

impl GopTemplate {
    pub fn nb_p(&self) -> usize {
        self.nb_p
    }

    pub fn b_per_group(&self) -> usize {
        self.b_per_group
    }

    pub fn frames(&self) -> &[FrameClass] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn count(&self, class: FrameClass) -> usize {
        self.frames.iter().filter(|&&c| c == class).count()
    }
}

impl fmt::Display for GopTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.frames.iter().try_for_each(|c| write!(f, "{}", c.as_char()))
    }
}

impl FromStr for GopTemplate {
    type Err = StreamError;

    /// Parses an arbitrary layout such as `IBBP`. The only structural
    /// requirement is a single I frame at position 0.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let frames = s
            .chars()
            .map(FrameClass::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        if frames.first() != Some(&FrameClass::I)
            || frames.iter().filter(|&&c| c == FrameClass::I).count() != 1
        {
            return Err(StreamError::BadTemplate);
        }
        let nb_p = frames.iter().filter(|&&c| c == FrameClass::P).count();
        let nb_b = frames.len() - 1 - nb_p;
        Ok(GopTemplate {
            nb_p,
            b_per_group: if nb_p == 0 { nb_b } else { nb_b / (nb_p + 1) },
            frames,
        })
    }
}

/// `I (B^b P)^nb_p B^b`. `(3, 2)` yields `IBBPBBPBBPBB`.
pub fn build_gop_template(nb_p: usize, b_per_group: usize) -> Result<GopTemplate, StreamError> {
    if nb_p == 0 {
        return Err(StreamError::NoPFrames);
    }
    let mut frames = Vec::with_capacity(1 + nb_p + (nb_p + 1) * b_per_group);
    frames.push(FrameClass::I);
    for _ in 0..nb_p {
        frames.extend(std::iter::repeat(FrameClass::B).take(b_per_group));
        frames.push(FrameClass::P);
    }
    frames.extend(std::iter::repeat(FrameClass::B).take(b_per_group));
    Ok(GopTemplate {
        nb_p,
        b_per_group,
        frames,
    })
}

/// k-frames labeling of one GoP.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KFramePattern {
    labels: Vec<PatternLabel>,
}

impl KFramePattern {
    pub fn labels(&self) -> &[PatternLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, pos: usize) -> Option<PatternLabel> {
        self.labels.get(pos).copied()
    }

    /// Positions carrying `label`, ascending.
    pub fn positions(&self, label: PatternLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, label: PatternLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

impl fmt::Display for KFramePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.labels.iter().try_for_each(|l| write!(f, "{}", l.as_char()))
    }
}

impl FromStr for KFramePattern {
    type Err = StreamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let labels = s
            .chars()
            .map(PatternLabel::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KFramePattern { labels })
    }
}

impl FromIterator<PatternLabel> for KFramePattern {
    fn from_iter<I: IntoIterator<Item = PatternLabel>>(iter: I) -> Self {
        KFramePattern {
            labels: iter.into_iter().collect(),
        }
    }
}

/// Positionwise I→M, P→H, B→O.
pub fn classify_gop(template: &GopTemplate) -> KFramePattern {
    template.frames.iter().map(|c| c.label()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VideoId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerId(pub u32);

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// One synthetic frame. Frames carry no payload: one frame is one unit of
/// server or network capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<T> {
    pub stream_id: StreamId,
    pub gop_index: u32,
    pub seq_in_gop: u32,
    pub class: FrameClass,
    pub label: PatternLabel,
    pub release_time: T,
    pub deadline: T,
}

/// Static description of a video and the rate a client demands for it.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoStream<T> {
    pub video_id: VideoId,
    pub nb_gop: u32,
    pub template: GopTemplate,
    pub pattern: KFramePattern,
    pub required_rate: T,
}

impl<T: Scalar> VideoStream<T> {
    pub fn new(
        video_id: VideoId,
        nb_gop: u32,
        template: GopTemplate,
        required_rate: T,
    ) -> Result<Self, StreamError> {
        if nb_gop == 0 {
            return Err(StreamError::NoGop);
        }
        if !(required_rate > T::zero()) || !required_rate.is_finite() {
            return Err(StreamError::BadRate);
        }
        let pattern = classify_gop(&template);
        Ok(VideoStream {
            video_id,
            nb_gop,
            template,
            pattern,
            required_rate,
        })
    }

    pub fn frame_count(&self) -> u64 {
        u64::from(self.nb_gop) * self.template.len() as u64
    }

    /// Playback duration at the required rate.
    pub fn duration(&self) -> T {
        T::from_count(self.frame_count()) / self.required_rate
    }
}

/// Deadline slack as a multiple of the inter-frame interval.
pub fn deadline_slack<T: Scalar>(required_rate: T, multiplier: T) -> T {
    multiplier / required_rate
}

/// Builds frame `index` (0-based across the whole stream) without materializing the others.
pub fn frame_at<T: Scalar>(
    stream_id: StreamId,
    template: &GopTemplate,
    pattern: &KFramePattern,
    index: u64,
    required_rate: T,
    start_time: T,
    slack: T,
) -> Frame<T> {
    let len = template.len() as u64;
    let seq = (index % len) as usize;
    let release_time = start_time + T::from_count(index) / required_rate;
    Frame {
        stream_id,
        gop_index: (index / len) as u32,
        seq_in_gop: seq as u32,
        class: template.frames()[seq],
        label: pattern.labels()[seq],
        release_time,
        deadline: release_time + slack,
    }
}

/// Full frame schedule of a stream: `nb_gop × |template|` frames released
/// `1 / required_rate` apart, each due `slack` after release.
pub fn generate_stream<T: Scalar>(
    stream_id: StreamId,
    nb_gop: u32,
    template: &GopTemplate,
    required_rate: T,
    start_time: T,
    slack: T,
) -> Result<Vec<Frame<T>>, StreamError> {
    if nb_gop == 0 {
        return Err(StreamError::NoGop);
    }
    if !(required_rate > T::zero()) || !required_rate.is_finite() {
        return Err(StreamError::BadRate);
    }
    let pattern = classify_gop(template);
    let total = u64::from(nb_gop) * template.len() as u64;
    Ok((0..total)
        .map(|i| frame_at(stream_id, template, &pattern, i, required_rate, start_time, slack))
        .collect())
}
