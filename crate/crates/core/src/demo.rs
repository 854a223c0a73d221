//! Synthetic self-disclosure-style corpus for demos and tests.
//!
//! Records are assembled from sentence templates with randomly filled
//! slots, so no two records share long n-grams by accident, while the
//! shared template wording keeps the corpus stylistically uniform.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{default_id, Corpus, CorpusRecord, Sentiment};
use crate::error::Result;
use crate::rng::RngStream;
use crate::text::word_count;

const PEOPLE: &[&str] = &[
    "mother", "father", "partner", "friend", "boss", "sister", "brother", "roommate", "neighbor", "cousin",
    "grandmother", "coworker",
];
const PLACES: &[&str] = &[
    "city", "town", "house", "apartment", "office", "campus", "clinic", "gym", "library", "warehouse", "bakery",
    "garage",
];
const THINGS: &[&str] = &[
    "car", "bike", "laptop", "guitar", "camera", "couch", "phone", "garden", "kitchen", "dog", "cat", "boat",
];
const HOBBIES: &[&str] = &[
    "running", "painting", "cooking", "climbing", "swimming", "knitting", "gaming", "hiking", "baking", "reading",
    "gardening", "woodworking",
];
const TIMES: &[&str] = &[
    "last week", "two months ago", "this spring", "over the winter", "a few days ago", "last year", "recently",
    "this morning", "in the fall", "after new year",
];
const NUMBERS: &[&str] = &["two", "three", "four", "five", "six", "seven", "eight", "ten", "twelve", "fifteen"];

const OPENERS: &[&str] = &[
    "I have never really talked about this, but {time} my {person} and I moved to a new {place}.",
    "So {time} I started a new job at a {place} near my {person}'s {place2}.",
    "Throwaway account because my {person} reads this sub, but I need to get this off my chest.",
    "I am {num} years into {hobby} and {time} something changed for me.",
    "For context, I live with my {person} in a small {place} and work long shifts.",
    "This is going to be long, sorry. {time} my {person} sold the {thing} we shared.",
];

const POSITIVE: &[&str] = &[
    "Honestly I feel really happy about it and my {person} is proud of me.",
    "I was excited for the first time in {num} weeks and it felt great.",
    "The {place} turned out to be a good fit and I am glad I took the chance.",
    "Now I spend my evenings {hobby} and I feel calm and hopeful again.",
    "My {person} surprised me with a new {thing} and I was thrilled.",
    "Things are better than they have been in years and I am grateful.",
    "I finally paid off the {thing} and the relief is wonderful.",
    "Everyone at the {place} has been nice and I enjoy going in every day.",
];

const NEGATIVE: &[&str] = &[
    "Honestly I feel sad about it and my {person} barely talks to me now.",
    "I have been anxious for {num} weeks and I am exhausted all the time.",
    "The {place} is awful and I hate how lonely it gets at night.",
    "I stopped {hobby} because I am too tired and stressed to care.",
    "My {person} broke the {thing} and I was so angry I could not sleep.",
    "Things are worse than they were and I am worried about money.",
    "I still owe {num} hundred on the {thing} and it makes me miserable.",
    "Nobody at the {place} seems to notice me and it hurt more than I expected.",
];

const FILLERS: &[&str] = &[
    "We used to spend every weekend together at the {place}.",
    "My {person} keeps telling me to give it more time.",
    "I keep thinking about the {thing} we had {time}.",
    "It took me {num} tries to even write this post.",
    "Part of me wants to try {hobby} again with my {person}.",
    "I know it sounds small but the {thing} meant a lot to me.",
    "The drive from the {place} takes about {num} minutes each way.",
    "I told my {person} about it and they just listened.",
    "Some days I walk past the old {place} on purpose.",
    "I am not sure what I expected when I started {hobby}.",
];

const CLOSERS: &[&str] = &[
    "Anyway, thanks for reading if you got this far.",
    "Has anyone else been through something like this?",
    "I do not really know what I want from posting this.",
    "Any advice would mean a lot right now.",
    "I just needed to say it somewhere.",
];

fn fill(template: &str, rng: &mut RngStream) -> String {
    let mut out = template.to_string();
    for (slot, pool) in [
        ("{person}", PEOPLE),
        ("{place2}", PLACES),
        ("{place}", PLACES),
        ("{thing}", THINGS),
        ("{hobby}", HOBBIES),
        ("{time}", TIMES),
        ("{num}", NUMBERS),
    ] {
        while let Some(i) = out.find(slot) {
            let w = pool.choose(rng).expect("non-empty pool");
            out.replace_range(i..i + slot.len(), w);
        }
    }
    let mut chars = out.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
        None => out,
    }
}

fn planted_pii(rng: &mut RngStream) -> String {
    match rng.random_range(0..3) {
        0 => format!(
            "You can email me at user{}@example.com if you want to talk.",
            rng.random_range(100..1000)
        ),
        1 => format!(
            "My number is 555-{:03}-{:04} if anyone local wants to meet.",
            rng.random_range(100..1000),
            rng.random_range(0..10000)
        ),
        _ => format!("I put the details on https://example.org/post{}.", rng.random_range(10..100)),
    }
}

/// One record of 55 to 120 words.
pub fn demo_text(sentiment: Sentiment, pii: bool, rng: &mut RngStream) -> String {
    let feelings = match sentiment {
        Sentiment::Positive => POSITIVE,
        Sentiment::Negative => NEGATIVE,
    };
    let mut parts = vec![fill(OPENERS.choose(rng).expect("openers"), rng)];
    for _ in 0..2 {
        parts.push(fill(feelings.choose(rng).expect("feelings"), rng));
    }
    if pii {
        parts.push(planted_pii(rng));
    }
    let closer = fill(CLOSERS.choose(rng).expect("closers"), rng);
    let target = rng.random_range(55..=110);
    loop {
        let body = parts.join(" ");
        if word_count(&body) + word_count(&closer) >= target {
            break;
        }
        let pool = if rng.random::<f64>() < 0.4 { feelings } else { FILLERS };
        let next = fill(pool.choose(rng).expect("pool"), rng);
        if word_count(&body) + word_count(&next) + word_count(&closer) > 120 {
            break;
        }
        let at = rng.random_range(1..=parts.len());
        parts.insert(at, next);
    }
    parts.push(closer);
    parts.join(" ")
}

/// `n` labeled records; each carries planted PII with probability `pii_rate`.
pub fn demo_corpus(n: usize, pii_rate: f64, rng: &mut RngStream) -> Result<Corpus> {
    let records = (0..n)
        .map(|i| {
            let sentiment = if rng.random::<bool>() { Sentiment::Positive } else { Sentiment::Negative };
            let pii = rng.random::<f64>() < pii_rate;
            let mut sub = rng.derive(&default_id(i));
            CorpusRecord::new(default_id(i), demo_text(sentiment, pii, &mut sub)).with_sentiment(Some(sentiment))
        })
        .collect();
    Corpus::new(records)
}
