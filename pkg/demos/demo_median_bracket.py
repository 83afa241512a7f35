"""
Median income bracket of a ZIP code
====================================

Each ZIP gets the bracket holding its median tax filer: the lowest bracket
whose running filer count reaches half of the total.
"""

from emsequity.ingest import IncomeBracket, assign_bracket, build_zip_profiles, load_income

B = IncomeBracket

# an even split lands on the lower bracket unless asked otherwise
print(assign_bracket({B.B1: 5, B.B3: 5}))
print(assign_bracket({B.B1: 5, B.B3: 5}, tie="upper"))
print(assign_bracket({B.B1: 1, B.B5: 2}))

income_csv = b"""zip,bracket_index,filer_count
94124,1,3400
94124,2,4100
94124,3,2500
94124,4,1500
94124,5,1800
94124,6,600
94123,2,900
94123,5,7000
94123,6,3300
"""
profiles = build_zip_profiles(load_income(income_csv), {"94124": 35550, "94123": 25000})
for z, p in profiles.items():
    print(z, p.median_bracket.label, "population", p.population)
