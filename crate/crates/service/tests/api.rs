mod common;

use std::collections::BTreeSet;

use axum::http::StatusCode;
use common::*;
use hub_core::corpus::parse_record;
use hub_core::export::{cite_ris, cite_text};
use hub_core::insights::Granularity;
use hub_core::search::{parse_query, Facet, FacetQuery, Sort};
use hub_service::router;
use serde_json::json;

fn assert_envelope(r: &Reply, status: u16, code: &str) {
    assert_eq!(r.status.as_u16(), status, "{}", r.text());
    let v = r.json();
    assert_eq!(v["status"], status);
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn nothing_published_gives_503_but_still_a_header() {
    let f = empty_hub();
    let app = router(f.hub.clone());
    for uri in ["/api/stats/overview", "/api/search?q=covid", "/api/doc/33000001", "/api/export"] {
        let r = get(&app, uri).await;
        assert_envelope(&r, 503, "no_snapshot");
        assert_eq!(r.snapshot_id(), hub_service::NO_SNAPSHOT);
    }
}

#[tokio::test]
async fn overview_is_the_snapshot_overview() {
    let f = shared();
    let app = router(f.hub.clone());
    let snap = f.hub.snapshot().unwrap();
    let a = get(&app, "/api/stats/overview").await;
    let b = get(&app, "/api/stats/overview").await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.json(), to_json(&snap.overview()));
    assert_eq!(a.body, b.body);
    assert_eq!(a.snapshot_id(), snap.id);
    let o = a.json();
    assert!(o["publications"].as_u64().unwrap() >= 990);
    assert_eq!(o["journals"], 40);
    assert_eq!(o["topics"], 8);
}

#[tokio::test]
async fn unknown_routes_and_methods_use_the_envelope() {
    let app = router(shared().hub.clone());
    let r = get(&app, "/api/nope").await;
    assert_envelope(&r, 404, "route_not_found");
    assert!(!r.snapshot_id().is_empty());
    let r = post_json(&app, "/api/stats/overview", json!({})).await;
    assert_envelope(&r, 405, "method_not_allowed");
}

#[tokio::test]
async fn search_parameters_map_onto_the_library_query() {
    let f = shared();
    let app = router(f.hub.clone());
    let snap = f.hub.snapshot().unwrap();
    let cases: Vec<(&str, FacetQuery)> = vec![
        ("/api/search", FacetQuery::default()),
        ("/api/search?q=omicron", FacetQuery::text("omicron")),
        (
            "/api/search?q=vaccine&sort=relevance&page=2&size=7",
            FacetQuery { sort: Sort::Relevance, page: 2, page_size: 7, ..FacetQuery::text("vaccine") },
        ),
        (
            "/api/search?topic=Treatment&topic=Prevention",
            FacetQuery::default().with_filter(Facet::Topic, "Treatment").with_filter(Facet::Topic, "Prevention"),
        ),
        (
            "/api/search?q=variant:STRAIN:Delta&from=2021-01-01&to=2022-06-30",
            FacetQuery {
                from: Some("2021-01-01".parse().unwrap()),
                to: Some("2022-06-30".parse().unwrap()),
                ..parse_query("variant:STRAIN:Delta").unwrap()
            },
        ),
    ];
    for (uri, q) in cases {
        let r = get(&app, uri).await;
        assert_eq!(r.status, StatusCode::OK, "{uri}: {}", r.text());
        assert_eq!(r.json(), to_json(&snap.search(&q).unwrap()), "{uri}");
    }
}

#[tokio::test]
async fn bad_search_parameters_are_named() {
    let app = router(shared().hub.clone());
    for (uri, code, param) in [
        ("/api/search?page=0", "bad_page", "page"),
        ("/api/search?size=0", "bad_page", "size"),
        ("/api/search?size=100000", "bad_page", "size"),
        ("/api/search?page=x", "bad_parameter", "page"),
        ("/api/search?from=2021-13-01", "bad_parameter", "from"),
        ("/api/search?sort=random", "bad_query", "sort"),
        ("/api/search?colour=red", "bad_parameter", "colour"),
        ("/api/search?q=planet:mars", "bad_facet", "q"),
        ("/api/search?topic=", "bad_parameter", "topic"),
    ] {
        let r = get(&app, uri).await;
        assert_envelope(&r, 400, code);
        assert!(r.json()["message"].as_str().unwrap().starts_with(&format!("{param}:")), "{uri}: {}", r.text());
    }
}

#[tokio::test]
async fn comention_query_returns_the_tagged_set() {
    let app = router(shared().hub.clone());
    let expected: BTreeSet<u64> = fixture_lines("comention_omicron_bnt162b2.txt")
        .iter()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.trim().parse().unwrap())
        .collect();
    let r = get(&app, "/api/search?variant=STRAIN:Omicron&vaccine=VAX:BNT162b2&size=500").await;
    let v = r.json();
    let got: BTreeSet<u64> = v["hits"].as_array().unwrap().iter().map(|h| h["pmid"].as_u64().unwrap()).collect();
    assert_eq!(v["total"].as_u64().unwrap() as usize, expected.len());
    assert_eq!(got, expected);
}

#[tokio::test]
async fn documents_and_citations() {
    let f = shared();
    let app = router(f.hub.clone());
    let snap = f.hub.snapshot().unwrap();
    let pmid = *snap.collection_ids().iter().next().unwrap();
    let r = get(&app, &format!("/api/doc/{pmid}")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), to_json(&snap.doc(pmid).unwrap()));
    let record = snap.store.get(pmid).unwrap();

    let r = get(&app, &format!("/api/doc/{pmid}/cite?style=ris")).await;
    assert_eq!(r.json()["citation"], cite_ris(record));
    for tag in ["TY  - JOUR", "TI  - ", "JO  - ", "PY  - ", "ID  - ", "ER  - "] {
        assert!(r.json()["citation"].as_str().unwrap().contains(tag), "{tag}");
    }
    let r = get(&app, &format!("/api/doc/{pmid}/cite")).await;
    assert_eq!(r.json()["citation"], cite_text(record));
    assert!(r.json()["citation"].as_str().unwrap().ends_with(&format!("PMID: {pmid}.")));

    assert_envelope(&get(&app, "/api/doc/1").await, 404, "not_found");
    assert_envelope(&get(&app, "/api/doc/1/cite?style=text").await, 404, "not_found");
    assert_envelope(&get(&app, "/api/doc/abc").await, 400, "bad_parameter");
    assert_envelope(&get(&app, &format!("/api/doc/{pmid}/cite?style=bibtex")).await, 400, "bad_parameter");
    // Triaged out records are not part of the collection.
    if let Some(out) = snap.annotations.values().find(|a| !a.relevant()) {
        assert_envelope(&get(&app, &format!("/api/doc/{}", out.pmid)).await, 404, "not_found");
    }
}

#[tokio::test]
async fn stats_endpoints_are_library_projections() {
    let f = shared();
    let app = router(f.hub.clone());
    let snap = f.hub.snapshot().unwrap();
    for (g, name) in [(Granularity::Month, "month"), (Granularity::Quarter, "quarter"), (Granularity::Day, "day")] {
        let r = get(&app, &format!("/api/stats/growth?granularity={name}")).await;
        assert_eq!(r.json(), to_json(&snap.growth(g)));
    }
    assert_eq!(get(&app, "/api/stats/growth").await.json(), to_json(&snap.growth(Granularity::Month)));
    assert_envelope(&get(&app, "/api/stats/growth?granularity=year").await, 400, "bad_parameter");
    assert_eq!(get(&app, "/api/stats/cooccurrence").await.json(), to_json(snap.cooccurrence()));
    assert_eq!(get(&app, "/api/stats/trending?n=6").await.json(), to_json(&f.hub.trending(6).unwrap()));
    assert_eq!(get(&app, "/api/stats/share").await.json(), to_json(&f.hub.share_ratio().unwrap()));
    assert_eq!(get(&app, "/api/stats/topics").await.json()["counts"], to_json(&snap.stats.topics_per_article));
}

#[tokio::test]
async fn exports_stream_every_hit_newest_first() {
    let f = shared();
    let app = router(f.hub.clone());
    let snap = f.hub.snapshot().unwrap();

    let r = get(&app, "/api/export?format=jsonl&q=omicron&page=3&size=1").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "application/x-ndjson");
    let ids = snap.export_ids(&FacetQuery::text("omicron")).unwrap();
    let lines: Vec<String> = r.text().lines().map(String::from).collect();
    assert_eq!(lines.len(), ids.len());
    assert!(ids.len() > 20);
    for (line, pmid) in lines.iter().zip(&ids) {
        let back = parse_record(line).unwrap();
        let orig = snap.store.get(*pmid).unwrap();
        assert_eq!(back.pmid, orig.pmid);
        assert_eq!(
            (&back.title, &back.abstract_text, &back.journal),
            (&orig.title, &orig.abstract_text, &orig.journal)
        );
        assert_eq!((back.pub_date, &back.authors, &back.keywords), (orig.pub_date, &orig.authors, &orig.keywords));
    }

    let r = get(&app, "/api/export?format=csv").await;
    assert_eq!(r.text().lines().next().unwrap(), "pmid,title,journal,pub_date,topics,variants,vaccines");
    let mut rd = csv::Reader::from_reader(r.body.as_slice());
    assert_eq!(rd.records().count(), snap.overview().publications);

    let two: Vec<u64> = snap.collection_ids().into_iter().take(2).collect();
    let journal = &snap.store.get(two[0]).unwrap().journal;
    let q = FacetQuery::default().with_filter(Facet::Journal, journal);
    let n = snap.export_ids(&q).unwrap().len();
    let uri = format!("/api/export?journal={}", journal.replace(' ', "+"));
    assert_eq!(get(&app, &uri).await.text().lines().count(), n);

    assert_envelope(&get(&app, "/api/export?format=xml").await, 400, "bad_parameter");
    assert_envelope(&get(&app, "/api/export?page=0").await, 400, "bad_page");
}

#[tokio::test]
async fn review_queue_and_decisions() {
    let f = published_hub();
    let app = router(f.hub.clone());

    let r = get(&app, "/api/review/queue?k=12").await;
    assert_eq!(r.status, StatusCode::OK);
    let expected: Vec<u64> = f.hub.longcovid().snapshot().next_review_batch(12).iter().map(|i| i.pmid).collect();
    let queue = r.json();
    let got: Vec<u64> = queue.as_array().unwrap().iter().map(|i| i["pmid"].as_u64().unwrap()).collect();
    assert_eq!(got, expected);
    assert_eq!(queue, to_json(&f.hub.review_queue(12)));
    let first = &queue[0];
    for s in ["s1", "s2", "s3", "s4", "s5", "s6", "s7", "s8"] {
        assert!(first["signals"][s].is_number(), "{s}");
    }
    // Highlight offsets are char ranges that land on synonym text.
    let synonyms = f.hub.models().synonyms.as_ref().unwrap();
    for item in queue.as_array().unwrap() {
        let title: Vec<char> = item["title"].as_str().unwrap().chars().collect();
        for span in item["title_synonyms"].as_array().unwrap() {
            let (s, e) = (span[0].as_u64().unwrap() as usize, span[1].as_u64().unwrap() as usize);
            let text: String = title[s..e].iter().collect();
            assert!(!synonyms.char_spans(&text).is_empty(), "{text:?}");
        }
    }

    let pmid = got[0];
    let uri = format!("/api/review/{pmid}");
    let r = post_json(&app, &uri, json!({"label": "accept", "curator": "ann"})).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    assert_eq!(r.json()["status"], "accepted");
    assert_eq!(r.json()["decided_by"], "ann");
    let after = get(&app, "/api/review/queue?k=12").await.json();
    assert!(after.as_array().unwrap().iter().all(|i| i["pmid"] != pmid));

    assert_envelope(&post_json(&app, &uri, json!({"label": "reject", "curator": "bob"})).await, 409, "already_decided");
    assert_eq!(f.hub.longcovid().snapshot().item(pmid).unwrap().decided_by.as_deref(), Some("ann"));
    assert_envelope(
        &post_json(&app, "/api/review/1", json!({"label": "reject", "curator": "bob"})).await,
        404,
        "not_found",
    );
    assert_envelope(&post_json(&app, &uri, json!({"label": "maybe", "curator": "bob"})).await, 400, "bad_body");
    assert_envelope(&post_json(&app, &uri, json!({"label": "accept", "curator": " "})).await, 400, "bad_parameter");
    assert_envelope(&get(&app, "/api/review/queue?k=x").await, 400, "bad_parameter");
}
