#!/usr/bin/env python3
"""Generate the scripted 20-query bench suite over fixtures/covid/country_wise.csv.

Each query gets one script file that serves both modes: the one-shot fixture
matches only the flat "Schema Header" prompt, the others match by stage.
Outcomes are fixed by construction:

  strot:    17 clean, 2 recovered after one refine, 1 always malformed
  one_shot: 13 valid programs out of 20
  plans:    16 with four steps, 4 with three
"""
import json
import os

OUT = os.path.join(os.path.dirname(__file__), "..", "fixtures", "bench")


def group(keys, *aggs):
    return {"op": "group_by", "keys": keys,
            "aggregations": [{"column": c, "agg": a, "alias": n} for c, a, n in aggs]}


def sort(key, direction, tiebreak=None):
    s = {"op": "sort", "key": key, "direction": direction}
    if tiebreak:
        s["tiebreak"] = tiebreak
    return s


def cmp(column, op, value):
    return {"column": column, "cmp": op, "value": value}


def chart(label, *series):
    return {"shape": "chart_series", "label_column": label,
            "series": [{"label": l, "column": c} for l, c in series]}


def table(*columns):
    return {"shape": "table", "columns": list(columns)} if columns else {"shape": "table"}


def corr(a, b):
    return {"shape": "correlation", "column_a": a, "column_b": b}


def program(pipeline, output):
    return {"pipeline": pipeline, "output": output}


# (query, plan steps, fields_used, type, description, program, strot, one_shot)
#   strot:    "clean" | ("recover", bad_program) | "fail"
#   one_shot: None (reuse program) | bad response text
QUERIES = [
    (
        "Generate an Analysis comparing deaths versus new cases for WHO Region.",
        ["Filter data to include only Measures fields: 'deaths', 'New cases'",
         "Group data by WHO Region dimension",
         "Calculate sum of 'deaths' and 'New cases' for each WHO Region"],
        ["deaths", "New cases", "WHO Region"], "group",
        "This analysis compares the total deaths and new cases for each WHO region.",
        program([{"op": "select", "columns": ["WHO Region", "deaths", "New cases"]},
                 group(["WHO Region"], ("deaths", "sum", "Total Deaths"), ("New cases", "sum", "New Cases"))],
                chart("WHO Region", ("Total Deaths", "Total Deaths"), ("New Cases", "New Cases"))),
        "clean", None,
    ),
    (
        "Show me the New, Recovered, Death cases by Top 10 Countries",
        ["Rank countries by 'recovered' in descending order",
         "Keep the 10 highest ranked countries",
         "Select 'New cases', 'new deaths' and 'new recovered' for each country",
         "Present one series per measure with country labels"],
        ["country", "recovered", "New cases", "new deaths", "new recovered"], "rank",
        "Ranks countries by recovered cases and shows their new cases, deaths and recoveries.",
        program([sort("recovered", "desc", "country"), {"op": "limit", "count": 10}],
                chart("country", ("New Cases", "New cases"), ("New Deaths", "new deaths"),
                      ("New Recovered", "new recovered"))),
        "clean",
        json.dumps(program([sort("recovered", "desc"), {"op": "limit", "count": 10}],
                           chart("Country", ("New Cases", "New cases")))),
    ),
    (
        "What is the total number of confirmed cases in each WHO region?",
        ["Select 'WHO Region' and 'confirmed'",
         "Group rows by 'WHO Region'",
         "Sum 'confirmed' within each region",
         "Show one bar per region"],
        ["WHO Region", "confirmed"], "group",
        "Totals confirmed cases per WHO region.",
        program([group(["WHO Region"], ("confirmed", "sum", "Total Confirmed"))],
                chart("WHO Region", ("Total Confirmed", "Total Confirmed"))),
        ("recover", program([group(["WHO region"], ("confirmed", "sum", "Total Confirmed"))],
                            chart("WHO region", ("Total Confirmed", "Total Confirmed")))),
        json.dumps(program([group(["WHO region"], ("confirmed", "sum", "Total Confirmed"))],
                           chart("WHO region", ("Total Confirmed", "Total Confirmed")))),
    ),
    (
        "Which countries have recorded more than 100000 deaths?",
        ["Filter rows where 'deaths' is greater than 100000",
         "Keep 'country' and 'deaths'",
         "Sort by 'deaths' in descending order",
         "Return the matching countries as a table"],
        ["country", "deaths"], "filter",
        "Lists countries whose cumulative deaths exceed 100000.",
        program([{"op": "select", "columns": ["country", "deaths"]},
                 {"op": "filter", "predicate": cmp("deaths", "gt", 100000)},
                 sort("deaths", "desc", "country")],
                table("country", "deaths")),
        "clean", None,
    ),
    (
        "Is there a correlation between confirmed cases and deaths?",
        ["Select 'confirmed' and 'deaths'",
         "Drop rows with missing values in either column",
         "Compute the Pearson correlation coefficient",
         "Report the coefficient with both column names"],
        ["confirmed", "deaths"], "correlate",
        "Measures the linear association between confirmed cases and deaths.",
        program([{"op": "select", "columns": ["confirmed", "deaths"]}], corr("confirmed", "deaths")),
        "clean", None,
    ),
    (
        "Compare the average case fatality rate across WHO regions.",
        ["Select 'WHO Region' and 'Deaths / 100 Cases'",
         "Group rows by 'WHO Region'",
         "Average 'Deaths / 100 Cases' within each region",
         "Show one bar per region"],
        ["WHO Region", "Deaths / 100 Cases"], "group",
        "Average deaths per 100 cases for each WHO region.",
        program([group(["WHO Region"], ("Deaths / 100 Cases", "mean", "Avg Deaths per 100 Cases"))],
                chart("WHO Region", ("Avg Deaths per 100 Cases", "Avg Deaths per 100 Cases"))),
        "clean",
        json.dumps(program([group(["WHO Region"], ("Deaths/100 Cases", "mean", "avg"))],
                           chart("WHO Region", ("avg", "avg")))),
    ),
    (
        "Which 5 countries grew fastest over the last week?",
        ["Select 'country' and '1 week % increase'",
         "Sort by '1 week % increase' in descending order",
         "Keep the first 5 rows",
         "Show one bar per country"],
        ["country", "1 week % increase"], "rank",
        "Top five countries by one-week percentage increase in cases.",
        program([sort("1 week % increase", "desc", "country"), {"op": "limit", "count": 5}],
                chart("country", ("1 week % increase", "1 week % increase"))),
        "clean", None,
    ),
    (
        "Rank WHO regions by active cases.",
        ["Group rows by 'WHO Region'",
         "Sum 'active' within each region",
         "Sort regions by the total in descending order",
         "Show one bar per region"],
        ["WHO Region", "active"], "group",
        "Orders WHO regions by their total active cases.",
        program([group(["WHO Region"], ("active", "sum", "Active Cases")), sort("Active Cases", "desc")],
                chart("WHO Region", ("Active Cases", "Active Cases"))),
        "clean", None,
    ),
    (
        "List European countries that reported new deaths.",
        ["Filter rows where 'WHO Region' equals 'Europe'",
         "Filter rows where 'new deaths' is greater than 0",
         "Keep 'country' and 'new deaths'",
         "Return the rows as a table"],
        ["WHO Region", "country", "new deaths"], "filter",
        "European countries with at least one new death.",
        program([{"op": "filter", "predicate": {"and": [cmp("WHO Region", "eq", "Europe"),
                                                         cmp("new deaths", "gt", 0)]}}],
                table("country", "new deaths")),
        "clean", None,
    ),
    (
        "Which 10 countries have the highest death-to-case ratio?",
        ["Derive the ratio of 'deaths' to 'confirmed' for each country",
         "Sort by the ratio in descending order",
         "Keep the first 10 rows",
         "Show the ratio per country"],
        ["country", "deaths", "confirmed"], "rank",
        "Countries with the highest share of deaths among confirmed cases.",
        program([{"op": "derive", "name": "death ratio",
                  "expr": {"div": [{"col": "deaths"}, {"col": "confirmed"}]}},
                 sort("death ratio", "desc", "country"), {"op": "limit", "count": 10}],
                chart("country", ("Deaths per Case", "death ratio"))),
        "clean",
        "To find this, divide deaths by confirmed for each country and sort the result, then take the top ten.",
    ),
    (
        "How many countries are in each WHO region?",
        ["Group rows by 'WHO Region'",
         "Count 'country' within each region",
         "Show one bar per region"],
        ["WHO Region", "country"], "group",
        "Number of countries reporting in each WHO region.",
        program([group(["WHO Region"], ("country", "count", "Countries"))],
                chart("WHO Region", ("Countries", "Countries"))),
        "clean", None,
    ),
    (
        "Do new cases and new deaths move together?",
        ["Select 'New cases' and 'new deaths'",
         "Drop rows with missing values in either column",
         "Compute the Pearson correlation coefficient",
         "Report the coefficient with both column names"],
        ["New cases", "new deaths"], "correlate",
        "Correlation between daily new cases and new deaths.",
        program([{"op": "select", "columns": ["New cases", "new deaths"]}], corr("New cases", "new deaths")),
        ("recover", program([{"op": "select", "columns": ["newcases", "new deaths"]}],
                            corr("newcases", "new deaths"))),
        json.dumps(program([{"op": "select", "columns": ["newcases", "new deaths"]}],
                           corr("newcases", "new deaths"))),
    ),
    (
        "What is the largest confirmed count within each region?",
        ["Select 'WHO Region' and 'confirmed'",
         "Group rows by 'WHO Region'",
         "Take the maximum of 'confirmed' within each region",
         "Show one bar per region"],
        ["WHO Region", "confirmed"], "group",
        "Highest single-country confirmed count per region.",
        program([group(["WHO Region"], ("confirmed", "max", "Max Confirmed"))],
                chart("WHO Region", ("Max Confirmed", "Max Confirmed"))),
        "clean", None,
    ),
    (
        "Which countries have recovered fewer than half of their cases?",
        ["Filter rows where 'Recovered / 100 Cases' is below 50",
         "Keep 'country' and 'Recovered / 100 Cases'",
         "Return the rows as a table"],
        ["country", "Recovered / 100 Cases"], "filter",
        "Countries where recoveries are under half of confirmed cases.",
        program([{"op": "filter", "predicate": cmp("Recovered / 100 Cases", "lt", 50)}],
                table("country", "Recovered / 100 Cases")),
        "clean", None,
    ),
    (
        "Show how much cases grew last week in each region.",
        ["Select 'WHO Region' and '1 week change'",
         "Group rows by 'WHO Region'",
         "Sum '1 week change' within each region",
         "Show the weekly growth per region"],
        ["WHO Region", "1 week change"], "trend",
        "Total one-week change in confirmed cases per WHO region.",
        program([group(["WHO Region"], ("1 week change", "sum", "Weekly Change"))],
                chart("WHO Region", ("Weekly Change", "Weekly Change"))),
        "clean", None,
    ),
    (
        "Which 10 countries have the fewest confirmed cases?",
        ["Select 'country' and 'confirmed'",
         "Sort by 'confirmed' in ascending order",
         "Keep the first 10 rows",
         "Show one bar per country"],
        ["country", "confirmed"], "rank",
        "The ten countries with the lowest confirmed counts.",
        program([{"op": "select", "columns": ["country", "confirmed"]},
                 sort("confirmed", "asc", "country"), {"op": "limit", "count": 10}],
                chart("country", ("Confirmed", "confirmed"))),
        "clean",
        json.dumps(program([{"op": "limit", "count": 10}, sort("confirmed", "asc")],
                           chart("country", ("Confirmed", "confirmed")))),
    ),
    (
        "How strongly are recoveries related to active cases?",
        ["Select 'recovered' and 'active'",
         "Drop rows with missing values in either column",
         "Compute the Pearson correlation coefficient",
         "Report the coefficient with both column names"],
        ["recovered", "active"], "correlate",
        "Correlation between recovered and active cases.",
        program([{"op": "select", "columns": ["recovered", "active"]}], corr("recovered", "active")),
        "fail",
        "{\"pipeline\": [{\"op\": \"select\", \"columns\": [\"recovered\", \"active\"]}], \"output\": {\"shape\": \"correlation\"",
    ),
    (
        "What is the worldwide death toll?",
        ["Treat all rows as one group",
         "Sum 'deaths' across all countries",
         "Return the total as a one-row table"],
        ["deaths"], "summary",
        "Total deaths across all reporting countries.",
        program([group([], ("deaths", "sum", "Total Deaths"))], table("Total Deaths")),
        "clean", None,
    ),
    (
        "Compare average new recoveries across WHO regions.",
        ["Select 'WHO Region' and 'new recovered'",
         "Group rows by 'WHO Region'",
         "Average 'new recovered' within each region",
         "Show one bar per region"],
        ["WHO Region", "new recovered"], "group",
        "Mean daily recoveries per country in each region.",
        program([group(["WHO Region"], ("new recovered", "mean", "Avg New Recovered"))],
                chart("WHO Region", ("Avg New Recovered", "Avg New Recovered"))),
        "clean", None,
    ),
    (
        "Rank countries in the Americas by deaths.",
        ["Filter rows where 'WHO Region' equals 'Americas'",
         "Keep 'country' and 'deaths'",
         "Sort by 'deaths' in descending order",
         "Show one bar per country"],
        ["WHO Region", "country", "deaths"], "filter",
        "Deaths for each country in the Americas, highest first.",
        program([{"op": "filter", "predicate": cmp("WHO Region", "eq", "Americas")},
                 sort("deaths", "desc", "country")],
                chart("country", ("Deaths", "deaths"))),
        "clean", None,
    ),
]


def plan_text(steps, fields, ttype, description):
    return json.dumps({"steps": steps, "fields_used": fields,
                       "transformation_type": ttype, "description": description}, indent=2)


def main():
    os.makedirs(OUT, exist_ok=True)
    entries = []
    assert len(QUERIES) == 20
    for i, (query, steps, fields, ttype, desc, good, strot, one_shot) in enumerate(QUERIES, 1):
        good_text = json.dumps(good, indent=2)
        fixtures = [
            {"matcher": {"contains": "### Schema Header"},
             "response": one_shot if one_shot is not None else good_text},
            {"stage": "plan", "response": plan_text(steps, fields, ttype, desc)},
        ]
        if strot == "clean":
            fixtures.append({"stage": "synthesize", "response": good_text})
        elif strot == "fail":
            fixtures.append({"stage": "synthesize", "response": good_text,
                             "persona": "emit_malformed_object"})
            fixtures.append({"stage": "refine", "response": good_text,
                             "persona": "emit_malformed_object", "repeat": True})
        else:
            fixtures.append({"stage": "synthesize", "response": json.dumps(strot[1], indent=2)})
            fixtures.append({"stage": "refine", "response": good_text})
        name = f"q{i:02}.json"
        with open(os.path.join(OUT, name), "w") as f:
            json.dump({"model_id": "scripted", "fixtures": fixtures}, f, indent=2)
            f.write("\n")
        entries.append({"query": query, "fixtures": name})
    for mode in ("strot", "one_shot"):
        suite = {"dataset": "../covid/country_wise.csv", "mode": mode, "T": 3, "seed": 42, "k": 5,
                 "entries": entries}
        with open(os.path.join(OUT, f"suite_{mode}.json"), "w") as f:
            json.dump(suite, f, indent=2)
            f.write("\n")
    write_examples()


def write_examples():
    """Worked-example scripts for `strot ask` under fixtures/covid."""
    covid = os.path.join(OUT, "..", "covid")
    region, top10 = QUERIES[0], QUERIES[1]

    def strot_fixtures(q, synth):
        return [{"stage": "plan", "response": plan_text(*q[1:5])},
                {"stage": "synthesize", "response": synth}]

    region_good = json.dumps(region[5], indent=2)
    scripts = {
        "region.json": strot_fixtures(region, region_good),
        "top10.json": strot_fixtures(top10, json.dumps(top10[5], indent=2)),
        "region_recovery.json": strot_fixtures(region, region_good.replace('"New cases"', '"newcases"'))
        + [{"stage": "refine", "response": region_good}],
    }
    for name, fixtures in scripts.items():
        with open(os.path.join(covid, name), "w") as f:
            json.dump({"model_id": "scripted", "fixtures": fixtures}, f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
