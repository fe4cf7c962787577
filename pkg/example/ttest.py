from shiftlab.stats import students_ttest

result = students_ttest([1, 2, 3], [4, 5, 6])

print('t = {:.4f}, df = {}, p = {:.4f}, {}'.format(
    result.t,
    result.df,
    result.p,
    'significant' if result.significant else 'not significant'
))
