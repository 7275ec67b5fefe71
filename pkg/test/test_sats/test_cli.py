import io
import os
import json
import tempfile
import unittest
import unittest.mock
import xml.dom.minidom

import sats
import sats.cli
import sats.ingest
import sats.stats
import sats.synth
import sats.aggregate
import sats.unittest

class TestCli(unittest.TestCase):

    maxDiff = None

    def setUp(self):

        self.temp = tempfile.TemporaryDirectory()
        self.directory = self.temp.name

        self.sat_csv = self.path("sats.csv")
        sats.ingest.write_sat_csv(sats.unittest.table_one_corpus(), self.sat_csv)

        self.manifest = self.path("labels.json")
        sats.ingest.write_manifest(self.manifest, [
            {"image_id": image_id, "class_label": label, "saliency_path": f"{image_id}.npy", "segmentation_path": f"{image_id}.json", "method_tag": "unit"}
            for image_id, label in (("img1", "horse"), ("img2", "horse"), ("img3", "pony"))
        ])

    def tearDown(self):

        self.temp.cleanup()

    def path(self, *names):
        return os.path.join(self.directory, *names)

    def read(self, *names):

        with open(self.path(*names), "r", encoding="utf-8") as file:
            return file.read()

    def failing(self, argv, code):
        """
        Runs argv expecting an error exit, returning the logged error
        """

        with self.assertLogs("sats.cli", level="ERROR") as logged:
            self.assertEqual(sats.cli.main(argv), code)

        return logged.output[0]

    @unittest.mock.patch("sys.stdout", new_callable=io.StringIO)
    def test_help(self, stdout):

        self.assertEqual(sats.cli.main(["--help"]), 0)
        self.assertIn("aggregate", stdout.getvalue())

        self.assertEqual(sats.cli.main(["sweep", "--help"]), 0)
        self.assertIn("--prevalences", stdout.getvalue())

    @unittest.mock.patch("sys.stderr", new_callable=io.StringIO)
    def test_usage(self, stderr):

        self.assertEqual(sats.cli.main([]), 2)
        self.assertEqual(sats.cli.main(["aggregate", self.sat_csv, self.path("out.csv"), "--mode", "bogus"]), 2)
        self.assertIn("invalid choice", stderr.getvalue())

    def test_prevalences(self):

        self.assertEqual(sats.cli.prevalences("0, 0.25,0.5,"), [0.0, 0.25, 0.5])
        self.assertRaises(Exception, sats.cli.prevalences, "0,lots")

    def test_build(self):

        corpus = sats.unittest.MockCorpus(self.path("corpus"))

        corpus.add("one", [[1.0, 1.0, 0.5, 0.5], [1.0, 1.0, 0.5, 0.5], [-2.0, -2.0, 0.25, 0.25], [-2.0, -2.0, 0.25, 0.25]], sats.unittest.quadrants())
        corpus.add("two", [[0.0, 0.0, 3.0, 3.0], [0.0, 0.0, 3.0, 3.0], [1.0, 1.0, 2.0, 2.0], [1.0, 1.0, 2.0, 2.0]], sats.unittest.quadrants(), encoding="mask_png")

        manifest = corpus.write()

        self.assertEqual(sats.cli.main(["build", manifest, self.path("built.csv"), "--pad-radius", "0", "--jobs", "2"]), 0)

        built = sats.ingest.read_sat_csv(self.path("built.csv"))

        self.assertEqual([sat.image_id for sat in built], ["one", "two"])
        self.assertEqual(built[0].names, ["bottom_left", "top_left", "top_right", "bottom_right"])
        self.assertEqual(built[1].names, ["top_right", "bottom_right", "bottom_left", "top_left"])

        self.assertIn("no such file", self.failing(["build", self.path("nope.json"), self.path("built.csv")], 1))

    def test_aggregate(self):

        self.assertEqual(sats.cli.main(["aggregate", self.sat_csv, self.path("aggregate.csv"), "--decimals", "4"]), 0)

        lines = self.read("aggregate.csv").splitlines()

        self.assertEqual(lines[0].split(",")[:3], ["name", "relative_mean_attr", "absolute_mean_attr"])
        self.assertEqual([line.split(",")[0] for line in lines[1:]], ["watermark", "mane", "eyes", "legs", "hooves"])
        self.assertTrue(lines[1].startswith("watermark,0.0135,0.0090,"))
        self.assertTrue(lines[-1].startswith("hooves,0.0013,"))

        self.assertEqual(sats.cli.main(["aggregate", self.sat_csv, self.path("strata.csv"), "--manifest", self.manifest]), 0)

        aggregates = sats.aggregate.read_aggregate_csv(self.path("strata.csv"))

        self.assertEqual([aggregated.class_label for aggregated in aggregates], ["horse", "pony"])
        self.assertEqual([aggregated.corpus_size for aggregated in aggregates], [2, 1])

        self.assertEqual(sats.cli.main(["aggregate", self.sat_csv, self.path("merged.csv"), "--manifest", self.manifest, "--merge-classes"]), 0)
        self.assertEqual(len(sats.aggregate.read_aggregate_csv(self.path("merged.csv"))), 1)

        self.assertEqual(sats.cli.main(["aggregate", self.sat_csv, self.path("marked.csv"), "--require", "watermark", "--mode", "relative"]), 0)

        marked = sats.aggregate.read_aggregate_csv(self.path("marked.csv"))[0]

        self.assertEqual(marked.corpus_size, 2)
        self.assertIsNone(marked.rows[0].absolute_mean_attr)

        self.assertIn("no such file", self.failing(["aggregate", self.path("nope.csv"), self.path("out.csv")], 1))
        self.failing(["aggregate", self.sat_csv, self.path("nope", "out.csv")], 1)

    def test_diagram(self):

        sats.ingest.write_sat_csv(sats.unittest.overlap_corpus(), self.path("overlap.csv"))

        self.assertEqual(sats.cli.main([
            "diagram", self.path("overlap.csv"), self.path("cd.svg"), "--report", self.path("report.json"), "--test", "exact"
        ]), 0)

        document = xml.dom.minidom.parseString(self.read("cd.svg").encode("utf-8"))

        labels = [element.firstChild.data for element in document.getElementsByTagName("text") if element.getAttribute("class") == "segment-label"]

        self.assertEqual(labels, ["A (1.70, 20)", "B (2.00, 20)", "C (2.30, 20)"])

        report = sats.stats.read_report(self.path("report.json"))

        self.assertEqual(report.cliques, (("A", "B"), ("B", "C")))

        self.assertEqual(sats.cli.main(["diagram", self.path("overlap.csv"), self.path("again.svg"), "--test", "exact"]), 0)
        self.assertEqual(self.read("again.svg"), self.read("cd.svg"))

        self.assertEqual(sats.cli.main(["diagram", self.sat_csv, self.path("horse.svg"), "--manifest", self.manifest, "--class-label", "horse", "--no-counts"]), 0)

        self.assertIn("--class-label needs --manifest", self.failing(["diagram", self.sat_csv, self.path("cd.svg"), "--class-label", "horse"], 2))
        self.assertIn("need at least 2 SATs", self.failing(["diagram", self.sat_csv, self.path("cd.svg"), "--method", "other"], 2))

    def test_barplot(self):

        sats.cli.main(["aggregate", self.sat_csv, self.path("aggregate.csv")])
        sats.cli.main(["aggregate", self.sat_csv, self.path("strata.csv"), "--manifest", self.manifest])

        self.assertEqual(sats.cli.main(["barplot", self.path("aggregate.csv"), self.path("bars.svg"), "--top-k", "3", "--highlight", "watermark"]), 0)

        document = xml.dom.minidom.parseString(self.read("bars.svg").encode("utf-8"))
        bars = [element for element in document.getElementsByTagName("rect") if element.getAttribute("class").startswith("bar")]

        self.assertEqual(len(bars), 3)
        self.assertEqual(bars[0].getAttribute("class"), "bar highlight")

        self.assertEqual(sats.cli.main(["barplot", self.path("strata.csv"), self.path("panels.svg"), "--metric", "absolute_mean_rank"]), 0)

        document = xml.dom.minidom.parseString(self.read("panels.svg").encode("utf-8"))

        self.assertEqual(len([element for element in document.getElementsByTagName("g") if element.getAttribute("class") == "panel"]), 2)

        self.assertIn("top_k must be at least 1", self.failing(["barplot", self.path("aggregate.csv"), self.path("bars.svg"), "--top-k", "0"], 2))

    def test_query(self):

        self.assertEqual(sats.cli.main(["query", self.sat_csv, "--out", self.path("mane.csv"), "--filter", "segment_name=mane", "--sort", "image_id"]), 0)

        lines = self.read("mane.csv").splitlines()

        self.assertEqual(lines[0], ",".join(sats.SatSchema.columns()))
        self.assertEqual([line.split(",")[0] for line in lines[1:]], ["img1", "img2", "img3"])

        with unittest.mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            self.assertEqual(sats.cli.main([
                "query", self.sat_csv, "--manifest", self.manifest,
                "--group-by", "class_label", "--reduce", "count", "--reduce", "max:rank"
            ]), 0)

        self.assertEqual(stdout.getvalue(), "class_label,count,max_rank\nhorse,10,5\npony,4,4\n")

        with unittest.mock.patch("sys.stdout", new_callable=io.StringIO) as stdout:
            self.assertEqual(sats.cli.main(["query", self.sat_csv, "--aggregate", "--sort=-relative_mean_attr", "--top-k", "1"]), 0)

        self.assertTrue(stdout.getvalue().splitlines()[1].startswith("watermark,"))

        self.assertIn("unknown field 'nope'", self.failing(["query", self.sat_csv, "--filter", "nope=1"], 2))
        self.assertIn("cannot parse condition", self.failing(["query", self.sat_csv, "--filter", "nope"], 2))

    def test_compare(self):

        sats.ingest.write_sat_csv(sats.unittest.table_one_corpus()[2:], self.path("unmarked.csv"))

        sats.cli.main(["aggregate", self.sat_csv, self.path("baseline.csv")])
        sats.cli.main(["aggregate", self.path("unmarked.csv"), self.path("other.csv")])
        sats.cli.main(["aggregate", self.sat_csv, self.path("strata.csv"), "--manifest", self.manifest])

        self.assertEqual(sats.cli.main(["compare", self.path("baseline.csv"), self.path("other.csv"), self.path("compare.csv")]), 0)

        lines = self.read("compare.csv").splitlines()

        self.assertEqual(lines[0], "name,baseline_mean_attr,other_mean_attr,delta_mean_attr,baseline_mean_rank,other_mean_rank,rank_shift,baseline_appearance_count,other_appearance_count")
        self.assertEqual(lines[-1].split(",")[0], "watermark")
        self.assertEqual(lines[-1].split(",")[2], "")

        self.assertEqual(sats.cli.main(["compare", self.path("baseline.csv"), self.path("other.csv"), self.path("absolute.csv"), "--family", "absolute"]), 0)

        self.assertIn("compare needs exactly 1", self.failing(["compare", self.path("strata.csv"), self.path("other.csv"), self.path("compare.csv")], 2))

    def test_config(self):

        with open(self.path("config.json"), "w", encoding="utf-8") as file:
            json.dump({"decimals": 2, "mode": "relative"}, file)

        self.assertEqual(sats.cli.main(["--config", self.path("config.json"), "aggregate", self.sat_csv, self.path("aggregate.csv")]), 0)

        lines = self.read("aggregate.csv").splitlines()

        self.assertTrue(lines[1].startswith("watermark,0.01,,"))

        with open(self.path("bad.json"), "w", encoding="utf-8") as file:
            json.dump({"bogus": 1}, file)

        self.assertIn("unknown keys ['bogus'] for aggregate", self.failing(["--config", self.path("bad.json"), "aggregate", self.sat_csv, self.path("out.csv")], 2))

        with open(self.path("list.json"), "w", encoding="utf-8") as file:
            json.dump([1], file)

        self.assertIn("config must be a JSON object", self.failing(["--config", self.path("list.json"), "aggregate", self.sat_csv, self.path("out.csv")], 2))

        self.failing(["--config", self.path("nope.json"), "aggregate", self.sat_csv, self.path("out.csv")], 1)

    def test_sweep(self):

        argv = [
            "sweep", self.path("sweep"),
            "--image-size", "16", "--n-train", "10", "--n-test", "3", "--epochs", "5",
            "--prevalences", "0,0.5", "--dump-prevalence", "0.5"
        ]

        self.assertEqual(sats.cli.main(argv), 0)

        self.assertEqual(
            sorted(os.listdir(self.path("sweep"))),
            ["aggregate_0.00.csv", "aggregate_0.50.csv", "corpus_0.50", "ranks_0.00.svg", "ranks_0.50.svg", "sweep.csv"]
        )

        lines = self.read("sweep", "sweep.csv").splitlines()

        self.assertEqual(lines[0], "prevalence,watermark_mean_rank,acc_clean,acc_watermarked,seed")
        self.assertEqual(len(lines), 3)

        self.assertIn("prevalences must be ascending", self.failing(["sweep", self.path("bad"), "--prevalences", "0.5,0"], 2))

    def test_pipeline(self):

        self.assertEqual(sats.cli.main([
            "sweep", self.path("sweep"),
            "--image-size", "16", "--n-train", "10", "--n-test", "3", "--epochs", "5",
            "--prevalences", "0.5", "--dump-prevalence", "0.5"
        ]), 0)

        manifest = self.path("sweep", "corpus_0.50", "manifest.json")

        self.assertEqual(sats.cli.main(["build", manifest, self.path("built.csv"), "--pad-radius", "0"]), 0)
        self.assertEqual(sats.cli.main(["aggregate", self.path("built.csv"), self.path("built_aggregate.csv")]), 0)
        self.assertEqual(sats.cli.main(["diagram", self.path("built.csv"), self.path("built.svg")]), 0)

        config = sats.synth.SynthConfig(image_size=16, n_train=10, n_test=3, watermark_prevalence=0.5)
        dataset = sats.synth.generate_dataset(config)
        model = sats.synth.train_classifier(dataset.train, sats.synth.TrainConfig(epochs=5))

        expected = sats.aggregate.aggregate(sats.synth.build_sats(model, dataset.test_watermarked))
        actual = sats.aggregate.read_aggregate_csv(self.path("built_aggregate.csv"))

        self.assertEqual(len(actual), 1)
        self.assertEqual(actual[0].rows, expected.rows)
        self.assertIn(sats.synth.WATERMARK, actual[0].names)

        swept = sats.aggregate.read_aggregate_csv(self.path("sweep", "aggregate_0.50.csv"))[0]

        self.assertEqual(
            swept.row(sats.synth.WATERMARK).relative_mean_rank,
            actual[0].row(sats.synth.WATERMARK).relative_mean_rank
        )
