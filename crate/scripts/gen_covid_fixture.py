#!/usr/bin/env python3
"""Generate the synthetic country-level COVID-style CSV used by tests and the bench suite.

The values are synthetic (seeded), shaped like the public country-wise WHO
dashboard export: 187 countries, 15 columns, no missing values.
"""
import csv
import random
import sys

REGIONS = {
    "Eastern Mediterranean": [
        "Afghanistan", "Bahrain", "Djibouti", "Egypt", "Iran", "Iraq", "Jordan", "Kuwait",
        "Lebanon", "Libya", "Morocco", "Oman", "Pakistan", "Qatar", "Saudi Arabia", "Somalia",
        "Sudan", "Syria", "Tunisia", "United Arab Emirates", "West Bank and Gaza", "Yemen",
    ],
    "Europe": [
        "Albania", "Andorra", "Armenia", "Austria", "Azerbaijan", "Belarus", "Belgium",
        "Bosnia and Herzegovina", "Bulgaria", "Croatia", "Cyprus", "Czechia", "Denmark",
        "Estonia", "Finland", "France", "Georgia", "Germany", "Greece", "Holy See", "Hungary",
        "Iceland", "Ireland", "Israel", "Italy", "Kazakhstan", "Kosovo", "Kyrgyzstan", "Latvia",
        "Liechtenstein", "Lithuania", "Luxembourg", "Malta", "Moldova", "Monaco", "Montenegro",
        "Netherlands", "North Macedonia", "Norway", "Poland", "Portugal", "Romania", "Russia",
        "San Marino", "Serbia", "Slovakia", "Slovenia", "Spain", "Sweden", "Switzerland",
        "Tajikistan", "Turkey", "Ukraine", "United Kingdom", "Uzbekistan",
    ],
    "Africa": [
        "Algeria", "Angola", "Benin", "Botswana", "Burkina Faso", "Burundi", "Cabo Verde",
        "Cameroon", "Central African Republic", "Chad", "Comoros", "Congo (Brazzaville)",
        "Congo (Kinshasa)", "Cote d'Ivoire", "Equatorial Guinea", "Eritrea", "Eswatini",
        "Ethiopia", "Gabon", "Gambia", "Ghana", "Guinea", "Guinea-Bissau", "Kenya", "Lesotho",
        "Liberia", "Madagascar", "Malawi", "Mali", "Mauritania", "Mauritius", "Mozambique",
        "Namibia", "Niger", "Nigeria", "Rwanda", "Sao Tome and Principe", "Senegal",
        "Seychelles", "Sierra Leone", "South Africa", "South Sudan", "Tanzania", "Togo",
        "Uganda", "Western Sahara", "Zambia", "Zimbabwe",
    ],
    "Americas": [
        "Antigua and Barbuda", "Argentina", "Bahamas", "Barbados", "Belize", "Bolivia",
        "Brazil", "Canada", "Chile", "Colombia", "Costa Rica", "Cuba", "Dominica",
        "Dominican Republic", "Ecuador", "El Salvador", "Grenada", "Guatemala", "Guyana",
        "Haiti", "Honduras", "Jamaica", "Mexico", "Nicaragua", "Panama", "Paraguay", "Peru",
        "Saint Kitts and Nevis", "Saint Lucia", "Saint Vincent and the Grenadines", "Suriname",
        "Trinidad and Tobago", "US", "Uruguay", "Venezuela",
    ],
    "South-East Asia": [
        "Bangladesh", "Bhutan", "Burma", "India", "Indonesia", "Maldives", "Nepal",
        "Sri Lanka", "Thailand", "Timor-Leste",
    ],
    "Western Pacific": [
        "Australia", "Brunei", "Cambodia", "China", "Fiji", "Japan", "Laos", "Malaysia",
        "Mongolia", "New Zealand", "Papua New Guinea", "Philippines", "Singapore",
        "South Korea", "Taiwan*", "Vietnam", "Solomon Islands",
    ],
}

# Large outbreaks, pinned so the ranking queries have a stable top group.
PINNED = {
    "US": (4290259, 148011, 1325804, 56336, 1076, 27941),
    "Brazil": (2442375, 87618, 1846641, 23284, 614, 33728),
    "India": (1480073, 33408, 951166, 44457, 637, 33598),
    "Russia": (816680, 13334, 602249, 5607, 85, 3077),
    "South Africa": (452529, 7067, 274925, 7096, 298, 9848),
    "Mexico": (395489, 44022, 303810, 4973, 342, 8588),
    "Chile": (347923, 9187, 319954, 2133, 75, 1859),
    "Peru": (389717, 18418, 272547, 13756, 575, 4697),
    "Iran": (293606, 15912, 255144, 2434, 212, 1931),
    "Pakistan": (274289, 5842, 241026, 1176, 20, 3592),
}


def main(path: str) -> None:
    rng = random.Random(20200727)
    rows = []
    countries = [(c, region) for region, names in REGIONS.items() for c in names]
    countries.sort(key=lambda cr: cr[0])
    assert len(countries) == 187, len(countries)
    for country, region in countries:
        if country in PINNED:
            confirmed, deaths, recovered, new_cases, new_deaths, new_recovered = PINNED[country]
        else:
            confirmed = int(10 ** rng.uniform(1.3, 5.2))
            deaths = int(confirmed * rng.uniform(0.0, 0.06))
            recovered = max(1, int(confirmed * rng.uniform(0.3, 0.95)))
            new_cases = int(confirmed * rng.uniform(0.0, 0.02))
            new_deaths = int(new_cases * rng.uniform(0.0, 0.05))
            new_recovered = int(recovered * rng.uniform(0.0, 0.02))
        active = max(0, confirmed - deaths - recovered)
        last_week = max(1, int(confirmed * rng.uniform(0.85, 0.99)))
        change = confirmed - last_week
        rows.append([
            country,
            confirmed,
            deaths,
            recovered,
            active,
            new_cases,
            new_deaths,
            new_recovered,
            round(100.0 * deaths / confirmed, 2),
            round(100.0 * recovered / confirmed, 2),
            round(100.0 * deaths / recovered, 2),
            last_week,
            change,
            round(100.0 * change / last_week, 2),
            region,
        ])
    header = [
        "country", "confirmed", "deaths", "recovered", "active", "New cases", "new deaths",
        "new recovered", "Deaths / 100 Cases", "Recovered / 100 Cases",
        "Deaths / 100 Recovered", "confirmed last week", "1 week change",
        "1 week % increase", "WHO Region",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/covid/country_wise.csv")
