//! Bundled synthetic corpus: templated chit-chat over a handful of topics.
//!
//! Posts come from paraphrase families. Each family has one held-out
//! template that never appears in the paired data; it shows up only in the
//! unpaired pool and in the test set, so a model can learn it only through
//! augmentation. Held-out templates share a cue word with a seen template of
//! the same family. Responses depend on the family and on the post's topic.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

struct Topic {
    nouns: &'static [&'static str],
    adjs: &'static [&'static str],
}

const TOPICS: &[Topic] = &[
    Topic { nouns: &["pizza", "noodles", "sushi", "dumplings", "curry", "salad"], adjs: &["tasty", "spicy", "fresh", "delicious"] },
    Topic { nouns: &["jazz", "guitar", "piano", "concert", "album", "song"], adjs: &["beautiful", "loud", "catchy", "relaxing"] },
    Topic { nouns: &["paris", "tokyo", "beach", "mountain", "train", "island"], adjs: &["amazing", "crowded", "peaceful", "far"] },
    Topic { nouns: &["football", "tennis", "swimming", "running", "basketball", "yoga"], adjs: &["tiring", "exciting", "healthy", "fun"] },
    Topic { nouns: &["cat", "dog", "puppy", "kitten", "parrot", "rabbit"], adjs: &["cute", "fluffy", "playful", "lazy"] },
    Topic { nouns: &["thriller", "comedy", "cartoon", "documentary", "romance", "sequel"], adjs: &["funny", "scary", "boring", "touching"] },
    Topic { nouns: &["rain", "snow", "sunshine", "wind", "storm", "fog"], adjs: &["cold", "warm", "gloomy", "lovely"] },
    Topic { nouns: &["exam", "homework", "math", "physics", "essay", "library"], adjs: &["hard", "easy", "stressful", "useful"] },
    Topic { nouns: &["meeting", "deadline", "project", "office", "boss", "salary"], adjs: &["busy", "annoying", "important", "tough"] },
    Topic { nouns: &["shoes", "dress", "phone", "jacket", "bag", "watch"], adjs: &["expensive", "cheap", "stylish", "nice"] },
];

struct Family {
    /// Seen templates; `{n}` is the topic noun.
    posts: &'static [&'static str],
    held_out: &'static str,
    /// `{a}` is a topic adjective.
    responses: &'static [&'static str],
}

const FAMILIES: &[Family] = &[
    Family {
        posts: &["i really like {n}", "i am a big fan of {n}"],
        held_out: "i really enjoy {n} a lot",
        responses: &["me too {n} is so {a}", "same here i think {n} is {a}", "yes {n} is really {a}"],
    },
    Family {
        posts: &["what do you think about {n}", "how do you feel about {n}"],
        held_out: "do you think {n} is good",
        responses: &["i think {n} is {a}", "honestly {n} seems {a} to me", "in my view {n} is {a}"],
    },
    Family {
        posts: &["i tried {n} for the first time today", "today i finally got to try {n}"],
        held_out: "my first time trying {n} today",
        responses: &["how was the {n} was it {a}", "was the {n} {a}", "did you find {n} {a}"],
    },
    Family {
        posts: &["tomorrow i will go for {n}", "planning some {n} this weekend"],
        held_out: "planning to check out {n} tomorrow",
        responses: &["sounds great enjoy the {n}", "have fun with {n} hope it is {a}", "good luck with the {n}"],
    },
    Family {
        posts: &["i honestly cannot stand {n}", "{n} really annoys me"],
        held_out: "honestly {n} annoys me so much",
        responses: &["really i find {n} {a}", "why not {n} is {a}", "come on {n} is {a}"],
    },
];

const POST_PREFIXES: &[&str] = &["", "well", "oh", "hey", "so", "hmm"];
const RESPONSE_PREFIXES: &[&str] = &["", "haha", "wow", "ah", "oh", "yeah"];
const DISTRACTORS: &[&str] = &[
    "my friend told me about {n}",
    "there is a {n} near my home",
    "{n} was in the news again",
    "someone mentioned {n} yesterday",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub pairs: usize,
    pub unpaired: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            pairs: 500,
            unpaired: 5000,
            test: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub paired: Vec<(String, String)>,
    pub unpaired: Vec<String>,
    /// Posts use held-out templates only.
    pub test: Vec<(String, String)>,
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn pick<'a>(&mut self, xs: &[&'a str]) -> &'a str {
        xs.choose(&mut self.rng).copied().expect("non-empty")
    }

    fn topic(&mut self) -> (&'static Topic, &'static str) {
        let t = &TOPICS[self.rng.gen_range(0..TOPICS.len())];
        let n = self.pick(t.nouns);
        (t, n)
    }

    fn fill(template: &str, noun: &str, adj: &str, prefix: &str) -> String {
        let body = template.replace("{n}", noun).replace("{a}", adj);
        if prefix.is_empty() {
            body
        } else {
            format!("{prefix} {body}")
        }
    }

    fn post(&mut self, fam: &Family, noun: &str, held_out: bool) -> String {
        let template = if held_out { fam.held_out } else { self.pick(fam.posts) };
        let prefix = self.pick(POST_PREFIXES);
        Self::fill(template, noun, "", prefix)
    }

    fn response(&mut self, fam: &Family, topic: &Topic, noun: &str) -> String {
        let template = self.pick(fam.responses);
        let adj = self.pick(topic.adjs);
        let prefix = self.pick(RESPONSE_PREFIXES);
        Self::fill(template, noun, adj, prefix)
    }

    fn family(&mut self) -> &'static Family {
        &FAMILIES[self.rng.gen_range(0..FAMILIES.len())]
    }
}

/// Draws distinct items from `draw` until `want` are collected, giving up
/// once a long streak of draws yields nothing new.
fn distinct<T: Clone + Eq + std::hash::Hash>(
    want: usize,
    banned: &HashSet<T>,
    mut draw: impl FnMut() -> T,
) -> Result<Vec<T>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(want);
    let mut misses = 0usize;
    while out.len() < want {
        if misses > 5_000 {
            return Err(Error::InvalidConfig(format!(
                "synthetic generator cannot produce {want} distinct items"
            )));
        }
        let x = draw();
        if !banned.contains(&x) && seen.insert(x.clone()) {
            out.push(x);
            misses = 0;
        } else {
            misses += 1;
        }
    }
    Ok(out)
}

pub fn generate(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let none = HashSet::new();
    let test = distinct(cfg.test, &none, || {
        let fam = g.family();
        let (topic, noun) = g.topic();
        (g.post(fam, noun, true), g.response(fam, topic, noun))
    })?;
    let paired = distinct(cfg.pairs, &none, || {
        let fam = g.family();
        let (topic, noun) = g.topic();
        (g.post(fam, noun, false), g.response(fam, topic, noun))
    })?;
    // Test sides stay out of the pool so evaluation never sees its own text.
    let banned: HashSet<String> = test.iter().flat_map(|(p, r)| [p.clone(), r.clone()]).collect();
    let unpaired = distinct(cfg.unpaired, &banned, || {
        let fam = g.family();
        let (topic, noun) = g.topic();
        let roll: f64 = g.rng.gen();
        if roll < 0.45 {
            let held_out = g.rng.gen_bool(1.0 / 3.0);
            g.post(fam, noun, held_out)
        } else if roll < 0.9 {
            g.response(fam, topic, noun)
        } else {
            let prefix = g.pick(POST_PREFIXES);
            Gen::fill(g.pick(DISTRACTORS), noun, "", prefix)
        }
    })?;
    Ok(SyntheticCorpus { paired, unpaired, test })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub paired: PathBuf,
    pub unpaired: PathBuf,
    pub test: PathBuf,
}

impl SyntheticCorpus {
    /// Writes `paired.jsonl`, `unpaired.jsonl` and `test.jsonl` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<SynthPaths> {
        #[derive(Serialize)]
        struct Pair<'a> {
            post: &'a str,
            response: &'a str,
        }
        #[derive(Serialize)]
        struct Text<'a> {
            text: &'a str,
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SynthPaths {
            paired: dir.join("paired.jsonl"),
            unpaired: dir.join("unpaired.jsonl"),
            test: dir.join("test.jsonl"),
        };
        let pairs = |v: &[(String, String)]| -> Result<String> {
            let mut s = String::new();
            for (post, response) in v {
                s += &serde_json::to_string(&Pair { post, response })?;
                s.push('\n');
            }
            Ok(s)
        };
        let mut texts = String::new();
        for text in &self.unpaired {
            texts += &serde_json::to_string(&Text { text })?;
            texts.push('\n');
        }
        for (path, body) in [
            (&paths.paired, pairs(&self.paired)?),
            (&paths.unpaired, texts),
            (&paths.test, pairs(&self.test)?),
        ] {
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(paths)
    }
}
