// Schema configuration parsing and the SQL front end: grammar coverage,
// canonical rendering, and the error codes both surfaces promise.

#include <catch2/catch_amalgamated.hpp>

#include "blindex/schema_config.hpp"
#include "blindex/sql/ast.hpp"
#include "blindex/sql/parser.hpp"

#include "test_util.hpp"

using namespace blindex;

namespace {

const char* kConfig =
    "[patients]\n"
    "encrypted = [name, ssn]\n"
    "blind_index.ssn.bits = 13\n"
    "\n"
    "[notes]\n"
    "encrypted = [body]\n"
    "key_column = none\n";

} // namespace

// ---------------------------------------------------------------------------
// schema config
// ---------------------------------------------------------------------------

TEST_CASE("schema config: lookups over a two-table config") {
    SchemaConfig cfg = SchemaConfig::load(kConfig);

    REQUIRE(cfg.is_encrypted("patients", "ssn"));
    REQUIRE(cfg.is_encrypted("patients", "name"));
    REQUIRE_FALSE(cfg.is_encrypted("patients", "id"));
    REQUIRE_FALSE(cfg.is_encrypted("patients", "ssn__bidx"));
    REQUIRE(cfg.is_encrypted("notes", "body"));
    REQUIRE_FALSE(cfg.is_encrypted("nosuch", "ssn"));

    auto spec = cfg.bidx_spec("patients", "ssn");
    REQUIRE(spec.has_value());
    REQUIRE(spec->bits == 13);
    REQUIRE(spec->companion_column == "ssn__bidx");
    // Encrypted but not blind-indexed columns have no spec.
    REQUIRE_FALSE(cfg.bidx_spec("patients", "name").has_value());
    REQUIRE_FALSE(cfg.bidx_spec("notes", "body").has_value());
    REQUIRE_FALSE(cfg.bidx_spec("nosuch", "ssn").has_value());

    REQUIRE(cfg.is_companion("patients", "ssn__bidx"));
    REQUIRE_FALSE(cfg.is_companion("patients", "name__bidx"));
    REQUIRE_FALSE(cfg.is_companion("patients", "ssn"));
    REQUIRE_FALSE(cfg.is_companion("notes", "body__bidx"));

    REQUIRE(cfg.table_has_encrypted("patients"));
    REQUIRE(cfg.table_has_encrypted("notes"));
    REQUIRE_FALSE(cfg.table_has_encrypted("other"));

    REQUIRE(cfg.key_column("patients") == std::optional<std::string>("id"));
    REQUIRE(cfg.key_column("notes") == std::nullopt);
    // Unknown tables keep the default key so passthrough traffic is unaffected.
    REQUIRE(cfg.key_column("unknown") == std::optional<std::string>("id"));

    REQUIRE_FALSE(cfg.empty());
    REQUIRE(cfg.tables().size() == 2);
}

TEST_CASE("schema config: render round trips through load") {
    SchemaConfig cfg = SchemaConfig::load(kConfig);
    std::string text = cfg.render();
    SchemaConfig again = SchemaConfig::load(text);
    REQUIRE(again.render() == text);
    REQUIRE(again.bidx_spec("patients", "ssn")->bits == 13);
    REQUIRE(again.key_column("notes") == std::nullopt);
}

TEST_CASE("schema config: comments, blank lines, and custom key columns") {
    SchemaConfig cfg = SchemaConfig::load(
        "# leading comment\n"
        "[visits]\n"
        "  encrypted = [ reason ]   # inline comment\n"
        "\n"
        "  blind_index.reason.bits = 16\n"
        "key_column = visit_id\n");
    REQUIRE(cfg.is_encrypted("visits", "reason"));
    REQUIRE(cfg.bidx_spec("visits", "reason")->bits == 16);
    REQUIRE(cfg.key_column("visits") == std::optional<std::string>("visit_id"));
}

TEST_CASE("schema config: empty encrypted list is a valid table declaration") {
    SchemaConfig cfg = SchemaConfig::load("[audit]\nencrypted = []\n");
    REQUIRE(cfg.table("audit") != nullptr);
    REQUIRE_FALSE(cfg.table_has_encrypted("audit"));
}

TEST_CASE("schema config: malformed inputs raise config_error") {
    // Directive before any [table] section.
    REQUIRE_RAISES(SchemaConfig::load("encrypted = [x]\n"), errc::config_error);
    // Bits outside 1..256.
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = [x]\nblind_index.x.bits = 0\n"),
                   errc::config_error);
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = [x]\nblind_index.x.bits = 257\n"),
                   errc::config_error);
    // blind_index for a column missing from the encrypted list.
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = [x]\nblind_index.y.bits = 13\n"),
                   errc::config_error);
    // Unterminated header, duplicate section, duplicate list, duplicate column.
    REQUIRE_RAISES(SchemaConfig::load("[t\nencrypted = [x]\n"), errc::config_error);
    REQUIRE_RAISES(SchemaConfig::load("[t]\n[t]\n"), errc::config_error);
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = [x]\nencrypted = [y]\n"),
                   errc::config_error);
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = [x, x]\n"), errc::config_error);
    // Unknown directive and non-list encrypted value.
    REQUIRE_RAISES(SchemaConfig::load("[t]\nmystery = 4\n"), errc::config_error);
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = x\n"), errc::config_error);
    // A declared column colliding with a companion name.
    REQUIRE_RAISES(
        SchemaConfig::load("[t]\nencrypted = [ssn, ssn__bidx]\nblind_index.ssn.bits = 8\n"),
        errc::config_error);
    // key_column needs an identifier or the keyless marker.
    REQUIRE_RAISES(SchemaConfig::load("[t]\nencrypted = []\nkey_column = 9lives\n"),
                   errc::config_error);
}

// ---------------------------------------------------------------------------
// SQL lexing and literals
// ---------------------------------------------------------------------------

TEST_CASE("sql: quote_string doubles embedded quotes") {
    REQUIRE(sql::quote_string("abc") == "'abc'");
    REQUIRE(sql::quote_string("o'brien") == "'o''brien'");
    REQUIRE(sql::quote_string("") == "''");
    REQUIRE(sql::quote_string("''") == "''''''");
}

TEST_CASE("sql: literal forms parse and render") {
    sql::Statement s = sql::parse("SELECT -3, +4, 2.5, -0.125, NULL, 'o''brien'");
    REQUIRE(s.kind == sql::StatementKind::Select);
    REQUIRE(s.projection.size() == 6);
    for (const auto& item : s.projection)
        REQUIRE(item.kind == sql::SelectItem::Kind::LiteralValue);
    REQUIRE(s.projection[0].literal.kind == sql::LiteralKind::Integer);
    REQUIRE(s.projection[0].literal.text == "-3");
    REQUIRE(s.projection[1].literal.text == "4"); // unary plus normalizes away
    REQUIRE(s.projection[2].literal.kind == sql::LiteralKind::Float);
    REQUIRE(s.projection[2].literal.text == "2.5");
    REQUIRE(s.projection[3].literal.text == "-0.125");
    REQUIRE(s.projection[4].literal.kind == sql::LiteralKind::Null);
    REQUIRE(s.projection[5].literal.kind == sql::LiteralKind::String);
    REQUIRE(s.projection[5].literal.text == "o'brien");
    REQUIRE(sql::render(s) == "SELECT -3, 4, 2.5, -0.125, NULL, 'o''brien'");
}

TEST_CASE("sql: lexer rejects stray characters with a position") {
    try {
        sql::parse("SELECT @ FROM t");
        FAIL("expected syntax_error");
    } catch (const BxError& e) {
        REQUIRE(e.code() == errc::syntax_error);
        REQUIRE(std::string(e.what()) == "unexpected character '@' at position 7");
    }
}

TEST_CASE("sql: unterminated strings and empty input are syntax errors") {
    REQUIRE_RAISES(sql::parse("SELECT 'abc"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse(""), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("   "), errc::syntax_error);
}

// ---------------------------------------------------------------------------
// SELECT
// ---------------------------------------------------------------------------

TEST_CASE("sql: select star and column lists") {
    sql::Statement s = sql::parse("select * from patients");
    REQUIRE(s.kind == sql::StatementKind::Select);
    REQUIRE(s.table == "patients");
    REQUIRE(s.projection.size() == 1);
    REQUIRE(s.projection[0].kind == sql::SelectItem::Kind::Star);
    REQUIRE(sql::render(s) == "SELECT * FROM patients");

    s = sql::parse("SELECT id, name FROM patients");
    REQUIRE(s.projection.size() == 2);
    REQUIRE(s.projection[0].column == "id");
    REQUIRE(s.projection[1].column == "name");
}

TEST_CASE("sql: where clauses cover every comparison operator") {
    struct Case {
        const char* text;
        sql::CompareOp op;
    };
    const Case cases[] = {
        {"=", sql::CompareOp::Eq},  {"<>", sql::CompareOp::Ne}, {"<", sql::CompareOp::Lt},
        {"<=", sql::CompareOp::Le}, {">", sql::CompareOp::Gt},  {">=", sql::CompareOp::Ge},
    };
    for (const auto& c : cases) {
        std::string text = std::string("SELECT * FROM t WHERE qty ") + c.text + " 5";
        sql::Statement s = sql::parse(text);
        REQUIRE(s.where.size() == 1);
        REQUIRE(s.where[0].column == "qty");
        REQUIRE(s.where[0].op == c.op);
        REQUIRE(s.where[0].values.at(0) == sql::Literal::integer(5));
        REQUIRE(sql::render(s) == text);
    }

    sql::Statement like = sql::parse("SELECT * FROM t WHERE name LIKE 'bo%'");
    REQUIRE(like.where[0].op == sql::CompareOp::Like);
    REQUIRE(like.where[0].values[0].text == "bo%");
    REQUIRE(sql::render(like) == "SELECT * FROM t WHERE name LIKE 'bo%'");
}

TEST_CASE("sql: IN lists") {
    sql::Statement s = sql::parse("SELECT * FROM t WHERE id IN (1, 2, 3)");
    REQUIRE(s.where.size() == 1);
    REQUIRE(s.where[0].op == sql::CompareOp::In);
    REQUIRE(s.where[0].values.size() == 3);
    REQUIRE(s.where[0].values[2] == sql::Literal::integer(3));
    REQUIRE(sql::render(s) == "SELECT * FROM t WHERE id IN (1, 2, 3)");

    sql::Statement empty = sql::parse("SELECT * FROM t WHERE id IN ()");
    REQUIRE(empty.where[0].values.empty());
    REQUIRE(sql::render(empty) == "SELECT * FROM t WHERE id IN ()");

    sql::Statement mixed = sql::parse("SELECT * FROM t WHERE tag IN ('a', NULL, -7)");
    REQUIRE(mixed.where[0].values[0].kind == sql::LiteralKind::String);
    REQUIRE(mixed.where[0].values[1].is_null());
    REQUIRE(mixed.where[0].values[2].text == "-7");
}

TEST_CASE("sql: AND chains, LIMIT and OFFSET") {
    sql::Statement s =
        sql::parse("SELECT id FROM t WHERE a = 1 AND b <> 'x' AND c >= 2.5 LIMIT 10 OFFSET 4");
    REQUIRE(s.where.size() == 3);
    REQUIRE(s.limit == std::optional<uint64_t>(10));
    REQUIRE(s.offset == std::optional<uint64_t>(4));
    REQUIRE(sql::render(s) ==
            "SELECT id FROM t WHERE a = 1 AND b <> 'x' AND c >= 2.5 LIMIT 10 OFFSET 4");

    REQUIRE_FALSE(sql::parse("SELECT * FROM t").limit.has_value());
    REQUIRE_RAISES(sql::parse("SELECT * FROM t LIMIT 2.5"), errc::syntax_error);
}

TEST_CASE("sql: aggregates") {
    sql::Statement s = sql::parse("SELECT COUNT(*), COUNT(ssn), SUM(qty), AVG(qty), MIN(a), MAX(b) FROM t");
    REQUIRE(s.projection.size() == 6);
    REQUIRE(s.projection[0].func == sql::AggFunc::CountStar);
    REQUIRE(s.projection[1].func == sql::AggFunc::Count);
    REQUIRE(s.projection[1].column == "ssn");
    REQUIRE(s.projection[2].func == sql::AggFunc::Sum);
    REQUIRE(s.projection[3].func == sql::AggFunc::Avg);
    REQUIRE(s.projection[4].func == sql::AggFunc::Min);
    REQUIRE(s.projection[5].func == sql::AggFunc::Max);
    REQUIRE(s.has_aggregate());
    REQUIRE_FALSE(sql::parse("SELECT a FROM t").has_aggregate());
    REQUIRE(sql::render(s) ==
            "SELECT COUNT(*), COUNT(ssn), SUM(qty), AVG(qty), MIN(a), MAX(b) FROM t");

    REQUIRE_RAISES(sql::parse("SELECT MEDIAN(x) FROM t"), errc::syntax_error);
}

TEST_CASE("sql: SESSION_ID terms are extracted out of the predicate list") {
    sql::Statement s = sql::parse("SELECT name FROM patients WHERE SESSION_ID(42) AND ssn = 'x'");
    REQUIRE(s.session_term == std::optional<uint64_t>(42));
    REQUIRE(s.where.size() == 1);
    REQUIRE(s.where[0].column == "ssn");
    // Canonical render keeps the term so the statement stays self-describing.
    REQUIRE(sql::render(s) == "SELECT name FROM patients WHERE ssn = 'x' AND SESSION_ID(42)");

    // The term may appear anywhere in the chain.
    sql::Statement tail = sql::parse("SELECT * FROM t WHERE a = 1 AND SESSION_ID(7)");
    REQUIRE(tail.session_term == std::optional<uint64_t>(7));

    // Repeating the same id is harmless; different ids are a conflict.
    sql::Statement twice = sql::parse("SELECT * FROM t WHERE SESSION_ID(7) AND SESSION_ID(7)");
    REQUIRE(twice.session_term == std::optional<uint64_t>(7));
    REQUIRE_RAISES(sql::parse("SELECT * FROM t WHERE SESSION_ID(1) AND SESSION_ID(2)"),
                   errc::session_id_conflict);
}

TEST_CASE("sql: bare SELECT without FROM") {
    sql::Statement s = sql::parse("SELECT 1");
    REQUIRE(s.kind == sql::StatementKind::Select);
    REQUIRE(s.table.empty());
    REQUIRE(sql::render(s) == "SELECT 1");
}

// ---------------------------------------------------------------------------
// INSERT / UPDATE / DELETE
// ---------------------------------------------------------------------------

TEST_CASE("sql: insert with multiple rows") {
    sql::Statement s =
        sql::parse("INSERT INTO t (a, b) VALUES (1, 'x'), (2, NULL)");
    REQUIRE(s.kind == sql::StatementKind::Insert);
    REQUIRE(s.table == "t");
    REQUIRE(s.insert_columns == std::vector<std::string>{"a", "b"});
    REQUIRE(s.insert_rows.size() == 2);
    REQUIRE(s.insert_rows[0][1].text == "x");
    REQUIRE(s.insert_rows[1][1].is_null());
    REQUIRE(sql::render(s) == "INSERT INTO t (a, b) VALUES (1, 'x'), (2, NULL)");

    REQUIRE_RAISES(sql::parse("INSERT INTO t (a, b) VALUES (1)"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("INSERT INTO t VALUES (1)"), errc::syntax_error);
}

TEST_CASE("sql: update assignments and where") {
    sql::Statement s = sql::parse("UPDATE t SET a = 1, b = 'y' WHERE id = 3");
    REQUIRE(s.kind == sql::StatementKind::Update);
    REQUIRE(s.assignments.size() == 2);
    REQUIRE(s.assignments[0].first == "a");
    REQUIRE(s.assignments[1].second.text == "y");
    REQUIRE(s.where.size() == 1);
    REQUIRE(sql::render(s) == "UPDATE t SET a = 1, b = 'y' WHERE id = 3");

    // No WHERE clause is legal at the grammar level.
    REQUIRE(sql::parse("UPDATE t SET a = 1").where.empty());
}

TEST_CASE("sql: delete") {
    sql::Statement s = sql::parse("DELETE FROM t WHERE id IN (1, 2) LIMIT 1");
    REQUIRE(s.kind == sql::StatementKind::Delete);
    REQUIRE(s.where[0].op == sql::CompareOp::In);
    REQUIRE(s.limit == std::optional<uint64_t>(1));
    REQUIRE(sql::render(s) == "DELETE FROM t WHERE id IN (1, 2) LIMIT 1");
}

// ---------------------------------------------------------------------------
// DDL and transaction statements
// ---------------------------------------------------------------------------

TEST_CASE("sql: create table") {
    sql::Statement s = sql::parse(
        "CREATE TABLE patients (id INTEGER PRIMARY KEY, name TEXT, ssn VARCHAR(11))");
    REQUIRE(s.kind == sql::StatementKind::CreateTable);
    REQUIRE_FALSE(s.if_not_exists);
    REQUIRE(s.column_defs.size() == 3);
    REQUIRE(s.column_defs[0].name == "id");
    REQUIRE(s.column_defs[0].type_text == "INTEGER");
    REQUIRE(s.column_defs[0].primary_key);
    REQUIRE(s.column_defs[1].type_text == "TEXT");
    REQUIRE_FALSE(s.column_defs[1].primary_key);
    REQUIRE(s.column_defs[2].type_text == "VARCHAR(11)");
    REQUIRE(sql::render(s) ==
            "CREATE TABLE patients (id INTEGER PRIMARY KEY, name TEXT, ssn VARCHAR(11))");

    sql::Statement ine = sql::parse("CREATE TABLE IF NOT EXISTS t (id INTEGER)");
    REQUIRE(ine.if_not_exists);
    REQUIRE(sql::render(ine) == "CREATE TABLE IF NOT EXISTS t (id INTEGER)");

    // Untyped columns and multi-word types both survive the round trip.
    sql::Statement loose = sql::parse("CREATE TABLE t (a, b double precision)");
    REQUIRE(loose.column_defs[0].type_text.empty());
    REQUIRE(loose.column_defs[1].type_text == "DOUBLE PRECISION");
}

TEST_CASE("sql: drop table and transaction keywords") {
    REQUIRE(sql::parse("DROP TABLE t").kind == sql::StatementKind::DropTable);
    REQUIRE(sql::render(sql::parse("DROP TABLE t")) == "DROP TABLE t");
    REQUIRE(sql::parse("BEGIN").kind == sql::StatementKind::Begin);
    REQUIRE(sql::parse("begin;").kind == sql::StatementKind::Begin);
    REQUIRE(sql::parse("COMMIT").kind == sql::StatementKind::Commit);
    REQUIRE(sql::parse("ROLLBACK").kind == sql::StatementKind::Rollback);
    REQUIRE(sql::render(sql::parse("COMMIT")) == "COMMIT");
}

// ---------------------------------------------------------------------------
// procedures, passthrough, and error cases
// ---------------------------------------------------------------------------

TEST_CASE("sql: procedure spellings") {
    sql::Statement kx = sql::parse("SELECT KEY_EXCHANGE('QUJD')");
    REQUIRE(kx.kind == sql::StatementKind::Select);
    REQUIRE(kx.proc == sql::ProcKind::KeyExchange);
    REQUIRE(kx.proc_args.size() == 1);
    REQUIRE(kx.proc_args[0].text == "QUJD");
    REQUIRE(sql::render(kx) == "SELECT KEY_EXCHANGE('QUJD')");

    sql::Statement reg = sql::parse("SELECT REGISTER('alice', 'payload')");
    REQUIRE(reg.proc == sql::ProcKind::Register);
    REQUIRE(reg.proc_args.size() == 2);
    REQUIRE(sql::render(reg) == "SELECT REGISTER('alice', 'payload')");

    sql::Statement login = sql::parse("select login('alice', 'payload')");
    REQUIRE(login.proc == sql::ProcKind::Login);

    sql::Statement none = sql::parse("SELECT KEY_EXCHANGE()");
    REQUIRE(none.proc == sql::ProcKind::KeyExchange);
    REQUIRE(none.proc_args.empty());
}

TEST_CASE("sql: unrecognized statements fall through to Other with identifiers") {
    sql::Statement s = sql::parse("SHOW TABLES");
    REQUIRE(s.kind == sql::StatementKind::Other);
    REQUIRE(s.raw_sql == "SHOW TABLES");
    REQUIRE(s.identifiers == std::vector<std::string>{"SHOW", "TABLES"});
    REQUIRE(sql::render(s) == "SHOW TABLES");

    // Identifier capture keeps the original spelling for fail-closed screening.
    sql::Statement lower = sql::parse("explain select ssn from patients");
    REQUIRE(lower.kind == sql::StatementKind::Other);
    REQUIRE(lower.identifiers ==
            std::vector<std::string>{"explain", "select", "ssn", "from", "patients"});
}

TEST_CASE("sql: malformed statements raise syntax_error") {
    REQUIRE_RAISES(sql::parse("SELECT FROM t"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("SELECT * FROM"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("SELECT * FROM t WHERE"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("SELECT * FROM t WHERE a ="), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("SELECT 1 2"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("SELECT 1; SELECT 2"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("INSERT INTO t (a VALUES (1)"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("UPDATE t SET WHERE a = 1"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("DELETE FROM"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("CREATE TABLE t ()"), errc::syntax_error);
    REQUIRE_RAISES(sql::parse("DROP TABLE"), errc::syntax_error);
    // Reserved words cannot be identifiers.
    REQUIRE_RAISES(sql::parse("SELECT * FROM where"), errc::syntax_error);
}

TEST_CASE("sql: render is a fixpoint under re-parsing") {
    const char* statements[] = {
        "SELECT * FROM patients",
        "SELECT id, name FROM patients WHERE ssn = '078-05-1120' AND site = 3 LIMIT 5 OFFSET 2",
        "SELECT COUNT(*) FROM t WHERE a IN (1, 2, 3)",
        "SELECT name FROM t WHERE x <> 'o''brien' AND SESSION_ID(9)",
        "INSERT INTO t (a, b, c) VALUES (1, 'x', NULL), (-2, '', 0.5)",
        "UPDATE t SET a = 'z', b = NULL WHERE id IN (4, 5)",
        "DELETE FROM t WHERE qty >= 10 LIMIT 3",
        "CREATE TABLE IF NOT EXISTS t (id INTEGER PRIMARY KEY, v VARCHAR(64))",
        "DROP TABLE t",
        "BEGIN",
        "COMMIT",
        "ROLLBACK",
        "SELECT KEY_EXCHANGE('enc')",
        "SELECT REGISTER('bob', 'enc')",
        "SELECT LOGIN('bob', 'enc')",
    };
    for (const char* text : statements) {
        CAPTURE(text);
        std::string once = sql::render(sql::parse(text));
        std::string twice = sql::render(sql::parse(once));
        REQUIRE(once == twice);
    }
}
