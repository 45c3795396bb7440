#include <algorithm>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "gcfa/io.hpp"
#include "gcfa/replication.hpp"
#include "gcfa/simulation.hpp"

using namespace gcfa;

namespace {

const std::string kPerisk = std::string(GCFA_DATA_DIR) + "/perisk.csv";

IngestedData from_text(const std::string& text, const std::map<std::string, ColumnRole>& roles = {}) {
  std::istringstream in(text);
  return ingest_csv(in, roles);
}

PosteriorDraws small_run(bool scores) {
  const auto in = ingest_csv(kPerisk);
  McmcConfig c;
  c.iterations = 200;
  c.burnin = 20;
  c.thin = 2;
  c.seed = 5;
  c.store_scores = scores;
  return run_chain(in.data, c);
}

}  // namespace

TEST(Csv, QuotedFieldsWithCommasAndEscapedQuotes) {
  std::istringstream in("a,b\n\"x, y\",\"say \"\"hi\"\"\"\r\n1,\n");
  const auto rows = parse_csv(in);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "x, y");
  EXPECT_EQ(rows[1][1], "say \"hi\"");
  EXPECT_EQ(rows[2][1], "");
}

TEST(Ingest, BundledDatasetShapeAndMargins) {
  const auto in = ingest_csv(kPerisk);
  EXPECT_EQ(in.data.rows(), 62);
  EXPECT_EQ(in.data.cols(), 5);
  EXPECT_EQ(in.id_label, "Country");
  EXPECT_EQ(in.ids.size(), 62u);
  const auto labels = in.data.labels();
  const Index jud = in.column_index("Ind.Jud");
  const Index bmp = in.column_index(kBmpLabel);
  EXPECT_EQ(in.data.margin(jud).kind, MarginKind::Binary);
  EXPECT_EQ(in.data.margin(bmp).kind, MarginKind::Continuous);
  const auto zeros = [&](Index j) {
    int c = 0;
    for (Index i = 0; i < 62; ++i) c += in.original_value(j, in.data(i, j)) == 0.0;
    return c;
  };
  EXPECT_EQ(zeros(jud), 34);
  EXPECT_EQ(zeros(bmp), 14);
  EXPECT_THROW(in.column_index("nope"), input_error);
}

TEST(Ingest, InfersRolesAndRecodesDiscreteLevels) {
  const auto in = from_text("id,x,b,o\nr1,0.5,10,3\nr2,1.5,20,5\nr3,2.5,10,7\nr4,,20,5\n");
  EXPECT_EQ(in.ids, (std::vector<std::string>{"r1", "r2", "r3", "r4"}));
  EXPECT_EQ(in.data.margin(0).kind, MarginKind::Continuous);
  EXPECT_EQ(in.data.margin(1).kind, MarginKind::Binary);
  EXPECT_EQ(in.data.margin(2).kind, MarginKind::Ordinal);
  EXPECT_EQ(in.data.margin(2).levels, 3);
  EXPECT_EQ(in.data(2, 2), 3.0);
  EXPECT_EQ(in.original_value(2, 2.0), 5.0);
  EXPECT_EQ(in.model_value(1, 20.0), 2.0);
  EXPECT_TRUE(in.data.is_missing(3, 0));
}

TEST(Ingest, MarginSpecOverridesInference) {
  std::istringstream spec("# roles\nb: continuous\no : ignore\n");
  const auto roles = read_margin_spec(spec);
  const auto in = from_text("x,b,o\n0.5,1,3\n1.5,2,5\n2.5,3,7\n", roles);
  EXPECT_EQ(in.data.cols(), 2);
  EXPECT_EQ(in.data.margin(1).kind, MarginKind::Continuous);
  std::istringstream bad("b: weird\n");
  EXPECT_THROW(read_margin_spec(bad), input_error);
  EXPECT_THROW(from_text("x,b\n1,2\n3,4\n", {{"zz", ColumnRole::Ordinal}}), input_error);
}

TEST(Ingest, ReportsMalformedInputWithLocation) {
  try {
    from_text("x,y\n1,2\n3,abc\n4,5\n");
    FAIL() << "expected an input error";
  } catch (const input_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("column y"), std::string::npos) << e.what();
  }
  EXPECT_THROW(from_text("x,y\n1,2\n3\n"), input_error);
  EXPECT_THROW(from_text("x,y\n1,2\n1,3\n"), input_error);
  EXPECT_THROW(from_text("x,y\n,2\nNA,3\n"), input_error);
  EXPECT_THROW(from_text("x,y\n"), input_error);
  EXPECT_THROW(ingest_csv(std::string("/nonexistent/file.csv")), input_error);
}

TEST(Priors, ParseAndPrint) {
  const auto g = std::get<GdpParams>(parse_prior("gdp:2,0.5"));
  EXPECT_EQ(g.alpha, 2.0);
  EXPECT_EQ(g.beta, 0.5);
  const auto n = std::get<NormalParams>(parse_prior("normal:4"));
  EXPECT_DOUBLE_EQ(n.precision, 0.25);
  EXPECT_EQ(prior_text(parse_prior("normal:4")), "normal:4");
  EXPECT_THROW(parse_prior("cauchy:1"), input_error);
  EXPECT_THROW(parse_prior("gdp:-1,1"), input_error);
  EXPECT_EQ(parse_identification(identification_text(Identification::Unconstrained)), Identification::Unconstrained);
}

TEST(Archive, RoundTripIsExactAndByteStable) {
  for (bool scores : {false, true}) {
    const auto d = small_run(scores);
    std::ostringstream first;
    write_archive(first, d);
    std::istringstream in(first.str());
    const auto back = read_archive(in);
    EXPECT_EQ(back.loadings, d.loadings);
    EXPECT_EQ(back.uniqueness, d.uniqueness);
    EXPECT_EQ(back.scores, d.scores);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.config.seed, d.config.seed);
    std::ostringstream second;
    write_archive(second, back);
    EXPECT_EQ(first.str(), second.str());
  }
}

TEST(Archive, CarriesProbitCutpoints) {
  RngStream rng(1);
  SyntheticSpec spec;
  spec.n = 80;
  spec.p = 3;
  spec.k = 1;
  spec.margins = {OrdinalDirichletMargin{3, 2.0}};
  const auto s = generate_synthetic(rng, spec);
  McmcConfig c;
  c.iterations = 100;
  c.burnin = 10;
  c.thin = 1;
  const auto d = probit_fm_sampler(s.data, c);
  std::ostringstream out;
  write_archive(out, d);
  std::istringstream in(out.str());
  const auto back = read_archive(in);
  EXPECT_EQ(back.model, "probit");
  ASSERT_TRUE(back.has_cutpoints(2));
  EXPECT_EQ(back.cutpoints[2], d.cutpoints[2]);
  EXPECT_EQ(back.cutpoint_acceptance, d.cutpoint_acceptance);
}

TEST(Archive, RejectsCorruptInput) {
  std::istringstream wrong("not-an-archive\n");
  EXPECT_THROW(read_archive(wrong), input_error);
  std::ostringstream out;
  write_archive(out, small_run(false));
  std::string text = out.str();
  text.resize(text.size() - 40);
  std::istringstream cut(text);
  EXPECT_THROW(read_archive(cut), input_error);
}

TEST(Summary, OneRowPerParameter) {
  const auto d = small_run(false);
  std::ostringstream out;
  write_summary(out, summarize(d));
  const std::string text = out.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(lines, 1 + 5 + 5 + 10);
}
