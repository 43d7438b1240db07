use std::path::PathBuf;

use proptest::prelude::*;
use webdialog_core::bizdb::{BusinessDb, Page, ProcedureStatus};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn db() -> BusinessDb {
    let db = BusinessDb::open_in_memory().unwrap();
    db.seed_file(fixtures().join("seed.sql")).unwrap();
    let manifest = std::fs::read_to_string(fixtures().join("procedures.txt")).unwrap();
    db.load_manifest(&manifest).unwrap();
    db
}

const QUERIES: &[&str] = &[
    "SELECT * FROM orders ORDER BY id",
    "SELECT id, name FROM customers ORDER BY name",
    "SELECT o.id, o.item, o.qty, c.name AS customer FROM orders o JOIN customers c ON c.id = o.customer_id ORDER BY o.id",
    "SELECT customer_id, SUM(qty) AS total, COUNT(*) AS n FROM orders GROUP BY customer_id ORDER BY customer_id",
    "SELECT city FROM customers WHERE city IS NULL ORDER BY id",
    "SELECT id, item, NULL AS blank, qty * 1.5 AS weighted FROM orders ORDER BY qty DESC, id",
];

fn snapshot(db: &BusinessDb) -> Vec<Vec<Vec<String>>> {
    ["SELECT * FROM orders ORDER BY id", "SELECT * FROM customers ORDER BY id"]
        .iter()
        .map(|q| db.execute_query(q, None).unwrap().rows)
        .collect()
}

proptest! {
    #[test]
    fn every_row_has_the_column_count(q in 0..QUERIES.len(), offset in 0u64..12, size in 1u64..12) {
        let db = db();
        let paged = db.execute_query(QUERIES[q], Some(Page { offset, size })).unwrap();
        let full = db.execute_query(QUERIES[q], None).unwrap();
        for rs in [&paged, &full] {
            prop_assert!(rs.rows.iter().all(|r| r.len() == rs.columns.len()));
        }
        prop_assert_eq!(paged.total_rows, full.rows.len() as u64);
        prop_assert!(paged.rows.len() as u64 <= size);
    }

    #[test]
    fn pages_concatenate_to_the_full_result(q in 0..QUERIES.len(), k in 1u64..9) {
        let db = db();
        let full = db.execute_query(QUERIES[q], None).unwrap();
        let mut rows = Vec::new();
        let mut offset = 0;
        loop {
            let page = db.execute_query(QUERIES[q], Some(Page { offset, size: k })).unwrap();
            prop_assert_eq!(&page.columns, &full.columns);
            if page.rows.is_empty() {
                break;
            }
            rows.extend(page.rows);
            offset += k;
        }
        prop_assert_eq!(rows, full.rows);
    }

    #[test]
    fn failed_procedures_leave_tables_unchanged(
        item in "[a-z']{0,8}",
        qty in -3i64..3,
        customer in 0i64..6,
    ) {
        let db = db();
        let before = snapshot(&db);
        let r = db
            .call_procedure("add_order", &[item, qty.to_string(), customer.to_string()])
            .unwrap();
        let after = snapshot(&db);
        match r.status {
            ProcedureStatus::Failed => prop_assert_eq!(after, before),
            ProcedureStatus::Ok => {
                prop_assert_eq!(after[0].len(), before[0].len() + 1);
                prop_assert_eq!(&after[1], &before[1]);
            }
        }
        // qty must be positive and the customer must exist (ids 1..=3 in the seed).
        prop_assert_eq!(
            r.status == ProcedureStatus::Failed,
            qty <= 0 || !(1..=3).contains(&customer)
        );
    }
}
