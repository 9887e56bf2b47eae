use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The ten transfer-learning backbones of the severity grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Backbone {
    Xception,
    #[serde(rename = "VGG16")]
    Vgg16,
    #[serde(rename = "VGG19")]
    Vgg19,
    ResNet50,
    InceptionV3,
    InceptionResNetV2,
    MobileNet,
    MobileNetV2,
    DenseNet121,
    NasNetLarge,
}

impl Backbone {
    pub const ALL: [Backbone; 10] = [
        Backbone::Xception,
        Backbone::Vgg16,
        Backbone::Vgg19,
        Backbone::ResNet50,
        Backbone::InceptionV3,
        Backbone::InceptionResNetV2,
        Backbone::MobileNet,
        Backbone::MobileNetV2,
        Backbone::DenseNet121,
        Backbone::NasNetLarge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Backbone::Xception => "Xception",
            Backbone::Vgg16 => "VGG16",
            Backbone::Vgg19 => "VGG19",
            Backbone::ResNet50 => "ResNet50",
            Backbone::InceptionV3 => "InceptionV3",
            Backbone::InceptionResNetV2 => "InceptionResNetV2",
            Backbone::MobileNet => "MobileNet",
            Backbone::MobileNetV2 => "MobileNetV2",
            Backbone::DenseNet121 => "DenseNet121",
            Backbone::NasNetLarge => "NasNetLarge",
        }
    }

    /// Square input side in pixels.
    pub fn input_side(self) -> usize {
        match self {
            Backbone::NasNetLarge => 331,
            _ => 224,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backbone {
    type Err = String;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown backbone `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub name: Backbone,
    pub input_side: usize,
    /// Use the small built-in convolutional stand-in instead of published weights.
    pub desk_substitute: bool,
}

impl BackboneSpec {
    pub fn desk(name: Backbone) -> Self {
        Self { name, input_side: name.input_side(), desk_substitute: true }
    }

    pub fn pretrained(name: Backbone) -> Self {
        Self { name, input_side: name.input_side(), desk_substitute: false }
    }

    /// Parses a backbone name into a desk-substitute spec.
    pub fn parse_desk(name: &str) -> Result<Self, String> {
        name.parse().map(Self::desk)
    }
}
