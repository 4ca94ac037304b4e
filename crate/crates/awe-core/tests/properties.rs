//! Property tests for the invariants that must hold for all inputs, not
//! just the lab's.

use proptest::prelude::*;

use awe_core::memory::FilterSignature;
use awe_core::payload::{
    mutate, seed_payloads, violates, CharTransform, FilterModel, MUTATION_BUDGET,
};
use awe_core::state::{ContextKind, DigestConfig, ReflectionContext, VulnClass};
use awe_core::verifier::harness::evaluate_page;

fn arb_transform() -> impl Strategy<Value = CharTransform> {
    prop_oneof![
        Just(CharTransform::Passed),
        Just(CharTransform::Stripped),
        Just(CharTransform::HtmlEncoded),
        Just(CharTransform::UrlEncoded),
        Just(CharTransform::EscapedBackslash),
    ]
}

fn arb_filter() -> impl Strategy<Value = FilterModel> {
    let chars = proptest::sample::subsequence(
        vec!['<', '>', '"', '\'', '/', '=', '(', ')', ';', '`', ' '],
        0..=11,
    );
    let tags = proptest::sample::subsequence(
        vec!["script", "img", "svg", "iframe", "body", "input"],
        0..=6,
    );
    let handlers =
        proptest::sample::subsequence(vec!["onerror", "onload", "onclick", "onfocus"], 0..=4);
    (chars, proptest::collection::vec(arb_transform(), 11), tags, handlers, any::<bool>()).prop_map(
        |(chars, transforms, tags, handlers, case_sensitive)| {
            let mut model = FilterModel {
                case_sensitive_tag_filter: case_sensitive,
                ..Default::default()
            };
            for (c, t) in chars.into_iter().zip(transforms) {
                model.char_map.insert(c, t);
            }
            model.blocked_tags = tags.into_iter().map(String::from).collect();
            model.blocked_handlers = handlers.into_iter().map(String::from).collect();
            model
        },
    )
}

fn marker() -> impl Strategy<Value = String> {
    "[0-9a-f]{8}".prop_map(|hex| format!("AWE{hex}"))
}

proptest! {
    /// Constraint soundness and determinism: mutants never violate the
    /// filter model they were generated against, two runs agree exactly,
    /// and the fan-out stays within the mutation budget.
    #[test]
    fn mutation_soundness_and_determinism(filter in arb_filter(), seed_idx in 0usize..8) {
        let seeds = seed_payloads(
            VulnClass::Xss,
            Some(&ReflectionContext::of(ContextKind::RawHtml)),
        );
        let seed = &seeds[seed_idx % seeds.len()];
        let first = mutate(seed, &filter);
        let second = mutate(seed, &filter);
        prop_assert_eq!(
            first.iter().map(|t| t.template.clone()).collect::<Vec<_>>(),
            second.iter().map(|t| t.template.clone()).collect::<Vec<_>>()
        );
        prop_assert!(first.len() <= MUTATION_BUDGET);
        for mutant in &first {
            prop_assert!(
                violates(mutant, &filter).is_none(),
                "emitted mutant {:?} violates the model",
                mutant.template
            );
        }
    }

    /// Zero false positives by construction: a page where the marker appears
    /// only as text or encoded content never produces an execution signal
    /// with that marker.
    #[test]
    fn inert_marker_placements_never_execute(
        m in marker(),
        prefix in "[a-zA-Z0-9 .,!]{0,40}",
        suffix in "[a-zA-Z0-9 .,!]{0,40}",
        variant in 0usize..6,
    ) {
        let page = match variant {
            0 => format!("<div>{prefix}{m}{suffix}</div>"),
            1 => format!("<p>{prefix}&lt;script&gt;awe_hook('{m}')&lt;/script&gt;{suffix}</p>"),
            2 => format!("<input value=\"{m}\" name=\"{prefix}\">"),
            3 => format!("<!-- {prefix} {m} {suffix} -->"),
            4 => format!("<script>var q = '{m}';</script>"),
            5 => format!("<textarea>{prefix}<img src=x onerror=awe_hook('{m}')>{suffix}</textarea>"),
            _ => unreachable!(),
        };
        let hit = evaluate_page(&page).into_iter().any(|s| s.marker == m);
        prop_assert!(!hit, "inert page produced a signal: {page}");
    }

    /// Executed hook calls are always detected, regardless of surrounding
    /// benign content.
    #[test]
    fn executed_hook_is_always_detected(
        m in marker(),
        prefix in "[a-zA-Z0-9 .,!]{0,40}",
        suffix in "[a-zA-Z0-9 .,!]{0,40}",
        vehicle in 0usize..3,
    ) {
        let page = match vehicle {
            0 => format!("<p>{prefix}</p><script>awe_hook('{m}')</script><p>{suffix}</p>"),
            1 => format!("<div>{prefix}<img src=x onerror=awe_hook('{m}')>{suffix}</div>"),
            2 => format!("{prefix}<svg onload=awe_hook('{m}')>{suffix}"),
            _ => unreachable!(),
        };
        let hit = evaluate_page(&page).into_iter().any(|s| s.marker == m);
        prop_assert!(hit, "executed payload missed: {page}");
    }

    /// Digest stability: volatile timestamps never affect the digest.
    #[test]
    fn digest_ignores_volatile_timestamps(
        a in "[a-zA-Z <>/=\"']{0,60}",
        b in "[a-zA-Z <>/=\"']{0,60}",
        hour in 0u32..24, minute in 0u32..60,
    ) {
        let digests = DigestConfig::default();
        let ts = format!("2026-03-01T{hour:02}:{minute:02}:11Z");
        let with_ts = format!("{a}{ts}{b}");
        let without = format!("{a}{b}");
        prop_assert_eq!(digests.digest(with_ts.as_bytes()), digests.digest(without.as_bytes()));
    }

    /// Signature determinism: serializing a filter model twice yields the
    /// same signature, and the case flag is always significant.
    #[test]
    fn filter_signature_is_deterministic(filter in arb_filter()) {
        let sig1 = FilterSignature::of(&filter);
        let sig2 = FilterSignature::of(&filter.clone());
        prop_assert_eq!(&sig1, &sig2);
        let mut flipped = filter.clone();
        flipped.case_sensitive_tag_filter = !filter.case_sensitive_tag_filter;
        prop_assert_ne!(&sig1, &FilterSignature::of(&flipped));
    }

    /// Marker slots instantiate to exactly one occurrence of the marker.
    #[test]
    fn xss_seed_instantiation_embeds_marker_once(m in marker(), idx in 0usize..16) {
        let contexts = [
            ContextKind::RawHtml,
            ContextKind::AttrDoubleQuoted,
            ContextKind::JsStringSingle,
            ContextKind::HtmlComment,
        ];
        let seeds = seed_payloads(
            VulnClass::Xss,
            Some(&ReflectionContext::of(contexts[idx % contexts.len()])),
        );
        let seed = &seeds[idx % seeds.len()];
        let payload = seed.instantiate(&m);
        let text = String::from_utf8(payload).unwrap();
        prop_assert_eq!(text.matches(m.as_str()).count(), 1);
        prop_assert!(!text.contains(awe_core::payload::MARKER_SLOT));
    }
}
